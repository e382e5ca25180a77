use qkdnet::keyrate::*;

use super::oracle::{self, rel_err, OracleInput, OracleOutput};

pub const TOL: f64 = 1e-9;

pub fn oracle_input(ch: &ChannelInput, p: &ProtocolParams, sec: &SecurityParams) -> OracleInput {
    OracleInput {
        n_routed: ch.n_routed,
        n_sent: ch.n_sent,
        eta: ch.eta_tot,
        q_x: p.q_x,
        p: [p.p_mu1, p.p_mu2, p.p_mu3()],
        mu: [p.mu1, p.mu2, sec.mu3],
        f_ec: sec.f_ec,
        eps_cor: sec.eps_cor,
        eps_sec: sec.eps_sec,
        p_dc: sec.p_dc,
        eta_bob: sec.eta_bob,
        e_mis: sec.e_mis,
    }
}

pub fn mismatches(k: &KeyRateBreakdown, o: &OracleOutput) -> Vec<String> {
    let pairs = [
        ("n_x", k.n_x, o.n_x),
        ("n_z", k.n_z, o.n_z),
        ("m_x", k.m_x, o.m_x),
        ("m_z", k.m_z, o.m_z),
        ("tau0", k.tau0, o.tau0),
        ("tau1", k.tau1, o.tau1),
        ("s_x0_raw", k.s_x0_raw, o.s_x0_raw),
        ("s_x1_raw", k.s_x1_raw, o.s_x1_raw),
        ("s_z0_raw", k.s_z0_raw, o.s_z0_raw),
        ("s_z1_raw", k.s_z1_raw, o.s_z1_raw),
        ("v_z1_raw", k.v_z1_raw, o.v_z1_raw),
        ("s_x0", k.s_x0, o.s_x0),
        ("s_x1", k.s_x1, o.s_x1),
        ("s_z0", k.s_z0, o.s_z0),
        ("s_z1", k.s_z1, o.s_z1),
        ("v_z1", k.v_z1, o.v_z1),
        ("e_obs", k.e_obs, o.e_obs),
        ("phi_x", k.phi_x.unwrap_or(-1.0), o.phi_x.unwrap_or(-1.0)),
        ("ell_pre_floor", k.ell_pre_floor, o.ell_pre_floor),
    ];
    pairs
        .iter()
        .filter(|(_, got, want)| rel_err(*got, *want) > TOL)
        .map(|(name, got, want)| format!("{name}: engine {got:e} oracle {want:e} rel {:e}", rel_err(*got, *want)))
        .collect()
}

pub fn check_against_oracle(ch: &ChannelInput, p: &ProtocolParams, sec: &SecurityParams) -> Vec<String> {
    let k = key_length(ch, p, sec).unwrap();
    let o = oracle::evaluate(&oracle_input(ch, p, sec));
    mismatches(&k, &o)
}

/// Maps eight uniforms in [0, 1) to a valid channel and parameter point.
/// eta spans 1e-4..1, N spans 1e8..1e13.
pub fn draw(u: [f64; 8]) -> (ChannelInput, ProtocolParams) {
    let mu3 = SecurityParams::default().mu3;
    let eta_tot = 10f64.powf(-4.0 + 4.0 * u[0]);
    let n_routed = 10f64.powf(8.0 + 5.0 * u[1]);
    let q_x = 0.05 + 0.9 * u[2];
    let p_mu1 = 0.05 + 0.85 * u[3];
    let p_mu2 = 0.02 + u[4] * (0.97 - p_mu1 - 0.02);
    let mu1 = 0.1 + 0.9 * u[5];
    let mu2 = mu3 + 0.005 + u[6] * (mu1 - 2.0 * mu3 - 0.01);
    let ch = ChannelInput { n_routed, n_sent: n_routed * (1.0 + 3.0 * u[7]), eta_tot };
    (ch, ProtocolParams { q_x, p_mu1, p_mu2, mu1, mu2 })
}
