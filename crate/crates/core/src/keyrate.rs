//! Finite-key secure key length for three-intensity decoy-state BB84.
//!
//! Expected detection and error counts are derived from the channel
//! transmittance and used directly as observed counts. Bounds on the vacuum
//! and single-photon contributions follow the standard decoy analysis with
//! Hoeffding-type finite-size shifts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KeyRateError {
    #[error("invalid security parameters: {0}")]
    InvalidSecurity(String),
    #[error("invalid protocol parameters: {0}")]
    InvalidParams(String),
    #[error("invalid channel: {0}")]
    InvalidChannel(String),
    #[error("decoy intensities mu2 and mu3 coincide")]
    DegenerateIntensities,
    #[error("intensities violate mu1 > mu2 + mu3")]
    ConstraintViolated,
    #[error("{0}")]
    DomainError(String),
    #[error("no single-photon events can be certified")]
    InsufficientStatistics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SecurityParams {
    pub f_ec: f64,
    pub eps_cor: f64,
    pub eps_sec: f64,
    /// dark-count probability per detector per gate
    pub p_dc: f64,
    pub eta_bob: f64,
    pub e_mis: f64,
    /// vacuum decoy intensity, held fixed
    pub mu3: f64,
    /// Include the receiver efficiency in the error-count exponent.
    pub eta_bob_in_errors: bool,
}

impl Default for SecurityParams {
    fn default() -> Self {
        Self {
            f_ec: 1.16,
            eps_cor: 1e-15,
            eps_sec: 1e-10,
            p_dc: 2e-7,
            eta_bob: 0.15,
            e_mis: 0.005,
            mu3: 2e-4,
            eta_bob_in_errors: false,
        }
    }
}

impl SecurityParams {
    pub fn validate(&self) -> Result<(), KeyRateError> {
        let bad = |m: &str| Err(KeyRateError::InvalidSecurity(m.to_string()));
        if !(self.f_ec >= 1.0) {
            return bad("f_ec must be >= 1");
        }
        if !(self.eps_cor > 0.0 && self.eps_cor < 1.0) || !(self.eps_sec > 0.0 && self.eps_sec < 1.0) {
            return bad("eps_cor and eps_sec must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.p_dc) {
            return bad("p_dc must lie in [0, 1)");
        }
        if !(self.eta_bob > 0.0 && self.eta_bob <= 1.0) {
            return bad("eta_bob must lie in (0, 1]");
        }
        if !(0.0..0.5).contains(&self.e_mis) {
            return bad("e_mis must lie in [0, 0.5)");
        }
        if !(self.mu3 >= 0.0 && self.mu3.is_finite()) {
            return bad("mu3 must be >= 0");
        }
        Ok(())
    }
}

/// Free parameters of the protocol. `p_mu3` is implied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub q_x: f64,
    pub p_mu1: f64,
    pub p_mu2: f64,
    pub mu1: f64,
    pub mu2: f64,
}

impl ProtocolParams {
    pub fn p_mu3(&self) -> f64 {
        1.0 - self.p_mu1 - self.p_mu2
    }

    /// `[(mu1, p_mu1), (mu2, p_mu2), (mu3, p_mu3)]`
    pub fn intensities(&self, security: &SecurityParams) -> [(f64, f64); 3] {
        [(self.mu1, self.p_mu1), (self.mu2, self.p_mu2), (security.mu3, self.p_mu3())]
    }

    pub fn validate(&self, security: &SecurityParams) -> Result<(), KeyRateError> {
        let bad = |m: String| Err(KeyRateError::InvalidParams(m));
        if !(self.q_x > 0.0 && self.q_x < 1.0) {
            return bad(format!("q_x = {} outside (0, 1)", self.q_x));
        }
        for (name, p) in [("p_mu1", self.p_mu1), ("p_mu2", self.p_mu2), ("p_mu3", self.p_mu3())] {
            if !(p > 0.0 && p < 1.0) {
                return bad(format!("{name} = {p} outside (0, 1)"));
            }
        }
        if self.mu2 == security.mu3 {
            return Err(KeyRateError::DegenerateIntensities);
        }
        if !(self.mu2 > security.mu3) {
            return bad(format!("mu2 = {} must exceed mu3 = {}", self.mu2, security.mu3));
        }
        if !(self.mu1 > self.mu2 + security.mu3) {
            return Err(KeyRateError::ConstraintViolated);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelInput {
    /// N: pulses that reach the receiver
    pub n_routed: f64,
    /// N0: pulses generated by the sender
    pub n_sent: f64,
    pub eta_tot: f64,
}

impl ChannelInput {
    pub fn validate(&self) -> Result<(), KeyRateError> {
        if !(self.n_routed > 0.0 && self.n_routed <= self.n_sent && self.n_sent.is_finite()) {
            return Err(KeyRateError::InvalidChannel(format!(
                "need 0 < N <= N0, got N = {}, N0 = {}",
                self.n_routed, self.n_sent
            )));
        }
        if !(self.eta_tot > 0.0 && self.eta_tot <= 1.0) {
            return Err(KeyRateError::InvalidChannel(format!("eta_tot = {} outside (0, 1]", self.eta_tot)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    X,
    Z,
}

impl Basis {
    fn sifting(self, q_x: f64) -> f64 {
        match self {
            Basis::X => q_x * q_x,
            Basis::Z => (1.0 - q_x) * (1.0 - q_x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shift {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroKeyReason {
    InsufficientStatistics,
    NegativeKeyLength,
}

impl ZeroKeyReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ZeroKeyReason::InsufficientStatistics => "insufficient_statistics",
            ZeroKeyReason::NegativeKeyLength => "negative_key_length",
        }
    }
}

/// Every intermediate of one key-length evaluation. `*_raw` fields hold the
/// bounds before clamping to `[0, parent count]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyRateBreakdown {
    pub n_x: f64,
    pub n_z: f64,
    pub m_x: f64,
    pub m_z: f64,
    pub tau0: f64,
    pub tau1: f64,
    pub s_x0_raw: f64,
    pub s_x1_raw: f64,
    pub s_z0_raw: f64,
    pub s_z1_raw: f64,
    pub v_z1_raw: f64,
    pub s_x0: f64,
    pub s_x1: f64,
    pub s_z0: f64,
    pub s_z1: f64,
    pub v_z1: f64,
    /// None when `s_z1` or `s_x1` is zero.
    pub phi_x: Option<f64>,
    pub e_obs: f64,
    /// Key length before flooring and clamping. When `phi_x` is undefined
    /// this uses phi = 1/2, which keeps it continuous for optimization.
    pub ell_pre_floor: f64,
    pub ell: f64,
    pub rate_per_routed: f64,
    pub rate_per_sent: f64,
    pub reason: Option<ZeroKeyReason>,
}

/// Binary entropy with 0 log 0 = 0.
pub fn binary_entropy(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Probability that the source emits an n-photon state.
pub fn tau(n: u32, protocol: &ProtocolParams, security: &SecurityParams) -> f64 {
    let nf = factorial(n);
    protocol
        .intensities(security)
        .iter()
        .map(|&(k, p)| (-k).exp() * k.powi(n as i32) * p / nf)
        .sum()
}

/// Expected detections in `basis` for pulses of intensity `k` with probability `p_k`.
pub fn detection_count(
    basis: Basis,
    k: f64,
    p_k: f64,
    channel: &ChannelInput,
    protocol: &ProtocolParams,
    security: &SecurityParams,
) -> f64 {
    let x = channel.eta_tot * security.eta_bob * k;
    // 1 - (1 - 2 p_dc) e^-x without cancellation for small x
    let click = -(-x).exp_m1() + 2.0 * security.p_dc * (-x).exp();
    channel.n_routed * basis.sifting(protocol.q_x) * p_k * click
}

/// Expected bit errors in `basis` for intensity `k`.
pub fn error_count(
    basis: Basis,
    k: f64,
    p_k: f64,
    channel: &ChannelInput,
    protocol: &ProtocolParams,
    security: &SecurityParams,
) -> f64 {
    let eta = if security.eta_bob_in_errors { channel.eta_tot * security.eta_bob } else { channel.eta_tot };
    let err = security.p_dc + security.e_mis * -(-eta * k).exp_m1();
    channel.n_routed * basis.sifting(protocol.q_x) * p_k * err
}

/// Count for intensity `k` corrected for finite sampling, scaled to the
/// number of pulses sent at that intensity. Negative lower bounds are kept.
pub fn finite_size_bound(count: f64, total: f64, k: f64, p_k: f64, shift: Shift, security: &SecurityParams) -> f64 {
    let dev = (total / 2.0 * (21.0 / security.eps_sec).ln()).sqrt();
    let inner = match shift {
        Shift::Lower => count - dev,
        Shift::Upper => count + dev,
    };
    k.exp() / p_k * inner
}

fn clamp_count(x: f64, hi: f64) -> f64 {
    x.max(0.0).min(hi)
}

struct BasisCounts {
    n: [f64; 3],
    n_tot: f64,
    m: [f64; 3],
    m_tot: f64,
}

fn basis_counts(basis: Basis, channel: &ChannelInput, protocol: &ProtocolParams, security: &SecurityParams) -> BasisCounts {
    let ks = protocol.intensities(security);
    let n = ks.map(|(k, p)| detection_count(basis, k, p, channel, protocol, security));
    let m = ks.map(|(k, p)| error_count(basis, k, p, channel, protocol, security));
    BasisCounts { n, n_tot: n.iter().sum(), m, m_tot: m.iter().sum() }
}

fn check_intensities(protocol: &ProtocolParams, security: &SecurityParams) -> Result<(), KeyRateError> {
    if protocol.mu2 == security.mu3 {
        return Err(KeyRateError::DegenerateIntensities);
    }
    Ok(())
}

/// Raw lower bound on zero-photon detections in `basis`.
fn s0_raw(c: &BasisCounts, protocol: &ProtocolParams, security: &SecurityParams, tau0: f64) -> f64 {
    let (mu2, mu3) = (protocol.mu2, security.mu3);
    let n3m = finite_size_bound(c.n[2], c.n_tot, mu3, protocol.p_mu3(), Shift::Lower, security);
    let n2p = finite_size_bound(c.n[1], c.n_tot, mu2, protocol.p_mu2, Shift::Upper, security);
    tau0 * (mu2 * n3m - mu3 * n2p) / (mu2 - mu3)
}

/// Lower bound on zero-photon detections in `basis`, clamped to `[0, n_b]`.
pub fn s0_bound(
    basis: Basis,
    channel: &ChannelInput,
    protocol: &ProtocolParams,
    security: &SecurityParams,
) -> Result<f64, KeyRateError> {
    check_intensities(protocol, security)?;
    let c = basis_counts(basis, channel, protocol, security);
    let tau0 = tau(0, protocol, security);
    Ok(clamp_count(s0_raw(&c, protocol, security, tau0), c.n_tot))
}

fn s1_raw(c: &BasisCounts, protocol: &ProtocolParams, security: &SecurityParams, s0: f64, tau0: f64, tau1: f64) -> f64 {
    let (mu1, mu2, mu3) = (protocol.mu1, protocol.mu2, security.mu3);
    let n1p = finite_size_bound(c.n[0], c.n_tot, mu1, protocol.p_mu1, Shift::Upper, security);
    let n2m = finite_size_bound(c.n[1], c.n_tot, mu2, protocol.p_mu2, Shift::Lower, security);
    let n3p = finite_size_bound(c.n[2], c.n_tot, mu3, protocol.p_mu3(), Shift::Upper, security);
    let sq = mu2 * mu2 - mu3 * mu3;
    let num = tau1 * mu1 * (n2m - n3p - sq / (mu1 * mu1) * (n1p - s0 / tau0));
    num / (mu1 * (mu2 - mu3) - sq)
}

/// Lower bound on single-photon detections in `basis`, given the (clamped)
/// zero-photon bound `s0`; clamped to `[0, n_b]`.
pub fn s1_bound(
    basis: Basis,
    channel: &ChannelInput,
    protocol: &ProtocolParams,
    security: &SecurityParams,
    s0: f64,
) -> Result<f64, KeyRateError> {
    let (mu1, mu2, mu3) = (protocol.mu1, protocol.mu2, security.mu3);
    if !(mu1 * (mu2 - mu3) - mu2 * mu2 + mu3 * mu3 > 0.0) {
        return Err(KeyRateError::ConstraintViolated);
    }
    let c = basis_counts(basis, channel, protocol, security);
    let (tau0, tau1) = (tau(0, protocol, security), tau(1, protocol, security));
    Ok(clamp_count(s1_raw(&c, protocol, security, s0, tau0, tau1), c.n_tot))
}

/// Statistical uncertainty of the phase-error estimate.
pub fn gamma_term(a: f64, b: f64, c: f64, d: f64) -> Result<f64, KeyRateError> {
    if !(b > 0.0 && b < 1.0) || !(c > 0.0) || !(d > 0.0) {
        return Err(KeyRateError::DomainError(format!("gamma({a}, {b}, {c}, {d}) outside its domain")));
    }
    let bb = (1.0 - b) * b;
    // log of the product taken term by term so tiny b cannot overflow it
    let log_arg = (c + d).log2() - c.log2() - d.log2() - bb.log2() + 441f64.log2() - 2.0 * a.log2();
    let radicand = (c + d) * bb / (c * d * std::f64::consts::LN_2) * log_arg;
    if radicand < 0.0 {
        return Err(KeyRateError::DomainError(format!("gamma radicand {radicand} is negative")));
    }
    Ok(radicand.sqrt())
}

fn vz1_raw(cz: &BasisCounts, protocol: &ProtocolParams, security: &SecurityParams, tau1: f64) -> f64 {
    let (mu2, mu3) = (protocol.mu2, security.mu3);
    let m2p = finite_size_bound(cz.m[1], cz.m_tot, mu2, protocol.p_mu2, Shift::Upper, security);
    let m3m = finite_size_bound(cz.m[2], cz.m_tot, mu3, protocol.p_mu3(), Shift::Lower, security);
    tau1 * (m2p - m3m) / (mu2 - mu3)
}

/// Upper bound on bit errors among single-photon Z detections, clamped to `[0, m_Z]`.
pub fn vz1_bound(channel: &ChannelInput, protocol: &ProtocolParams, security: &SecurityParams) -> Result<f64, KeyRateError> {
    check_intensities(protocol, security)?;
    let cz = basis_counts(Basis::Z, channel, protocol, security);
    Ok(clamp_count(vz1_raw(&cz, protocol, security, tau(1, protocol, security)), cz.m_tot))
}

/// Upper bound on the single-photon phase error rate in X, capped at 1/2.
pub fn phase_error(s_z1: f64, s_x1: f64, v_z1: f64, security: &SecurityParams) -> Result<f64, KeyRateError> {
    if !(s_z1 > 0.0 && s_x1 > 0.0) {
        return Err(KeyRateError::InsufficientStatistics);
    }
    let b = v_z1 / s_z1;
    if b >= 0.5 {
        return Ok(0.5);
    }
    if b <= 0.0 {
        // gamma vanishes as b -> 0
        return Ok(0.0);
    }
    let g = match gamma_term(security.eps_sec, b, s_z1, s_x1) {
        Ok(g) => g,
        // log argument below 1: the uncertainty is negligible
        Err(KeyRateError::DomainError(_)) => 0.0,
        Err(e) => return Err(e),
    };
    Ok((b + g).min(0.5))
}

/// Full key-length pipeline for one channel and parameter choice.
pub fn key_length(
    channel: &ChannelInput,
    protocol: &ProtocolParams,
    security: &SecurityParams,
) -> Result<KeyRateBreakdown, KeyRateError> {
    channel.validate()?;
    security.validate()?;
    protocol.validate(security)?;

    let cx = basis_counts(Basis::X, channel, protocol, security);
    let cz = basis_counts(Basis::Z, channel, protocol, security);
    let tau0 = tau(0, protocol, security);
    let tau1 = tau(1, protocol, security);

    let s_x0_raw = s0_raw(&cx, protocol, security, tau0);
    let s_x0 = clamp_count(s_x0_raw, cx.n_tot);
    let s_x1_raw = s1_raw(&cx, protocol, security, s_x0, tau0, tau1);
    let s_x1 = clamp_count(s_x1_raw, cx.n_tot);
    let s_z0_raw = s0_raw(&cz, protocol, security, tau0);
    let s_z0 = clamp_count(s_z0_raw, cz.n_tot);
    let s_z1_raw = s1_raw(&cz, protocol, security, s_z0, tau0, tau1);
    let s_z1 = clamp_count(s_z1_raw, cz.n_tot);
    let v_z1_raw = vz1_raw(&cz, protocol, security, tau1);
    let v_z1 = clamp_count(v_z1_raw, cz.m_tot);

    let phi_x = match phase_error(s_z1, s_x1, v_z1, security) {
        Ok(p) => Some(p),
        Err(KeyRateError::InsufficientStatistics) => None,
        Err(e) => return Err(e),
    };
    let e_obs = cx.m_tot / cx.n_tot;

    let ell_pre_floor = s_x0 + s_x1
        - s_x1 * binary_entropy(phi_x.unwrap_or(0.5))
        - cx.n_tot * security.f_ec * binary_entropy(e_obs.min(0.5))
        - 6.0 * (21.0 / security.eps_sec).log2()
        - (2.0 / security.eps_cor).log2();

    let (ell, reason) = if phi_x.is_none() {
        (0.0, Some(ZeroKeyReason::InsufficientStatistics))
    } else if ell_pre_floor < 0.0 {
        (0.0, Some(ZeroKeyReason::NegativeKeyLength))
    } else {
        (ell_pre_floor.floor(), None)
    };

    Ok(KeyRateBreakdown {
        n_x: cx.n_tot,
        n_z: cz.n_tot,
        m_x: cx.m_tot,
        m_z: cz.m_tot,
        tau0,
        tau1,
        s_x0_raw,
        s_x1_raw,
        s_z0_raw,
        s_z1_raw,
        v_z1_raw,
        s_x0,
        s_x1,
        s_z0,
        s_z1,
        v_z1,
        phi_x,
        e_obs,
        ell_pre_floor,
        ell,
        rate_per_routed: ell / channel.n_routed,
        rate_per_sent: ell / channel.n_sent,
        reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table3() -> SecurityParams {
        SecurityParams::default()
    }

    fn params() -> ProtocolParams {
        ProtocolParams { q_x: 0.7, p_mu1: 0.7, p_mu2: 0.2, mu1: 0.5, mu2: 0.1 }
    }

    #[test]
    fn entropy_values() {
        assert_eq!(binary_entropy(0.0), 0.0);
        assert_eq!(binary_entropy(1.0), 0.0);
        assert_eq!(binary_entropy(0.5), 1.0);
        for x in [0.01, 0.1, 0.3] {
            assert!((binary_entropy(x) - binary_entropy(1.0 - x)).abs() < 1e-15);
        }
    }

    #[test]
    fn tau_degenerate_sources() {
        let sec = SecurityParams { mu3: 0.0, ..table3() };
        let vac = ProtocolParams { q_x: 0.5, p_mu1: 0.3, p_mu2: 0.3, mu1: 0.0, mu2: 0.0 };
        assert!((tau(0, &vac, &sec) - 1.0).abs() < 1e-15);
        assert_eq!(tau(1, &vac, &sec), 0.0);
        assert_eq!(tau(3, &vac, &sec), 0.0);

        // all weight on mu1 (up to 1e-15) gives a Poisson distribution
        let single = ProtocolParams { q_x: 0.5, p_mu1: 1.0 - 2e-15, p_mu2: 1e-15, mu1: 0.4, mu2: 0.1 };
        for n in 0..6 {
            let poisson = (-0.4f64).exp() * 0.4f64.powi(n as i32) / factorial(n);
            assert!((tau(n, &single, &sec) - poisson).abs() < 1e-14);
        }
    }

    #[test]
    fn tau_sums_to_one() {
        let p = params();
        let total: f64 = (0..=50).map(|n| tau(n, &p, &table3())).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dark_channel_and_vacuum_give_no_clicks() {
        let sec = SecurityParams { p_dc: 0.0, ..table3() };
        let dark = ChannelInput { n_routed: 1e10, n_sent: 1e10, eta_tot: 0.0 };
        assert_eq!(detection_count(Basis::X, 0.5, 0.7, &dark, &params(), &sec), 0.0);
        let ch = ChannelInput { eta_tot: 0.25, ..dark };
        assert_eq!(detection_count(Basis::Z, 0.0, 0.1, &ch, &params(), &sec), 0.0);
    }

    #[test]
    fn finite_size_shift_zero_counts() {
        assert_eq!(finite_size_bound(0.0, 0.0, 0.1, 0.3, Shift::Lower, &table3()), 0.0);
        assert_eq!(finite_size_bound(0.0, 0.0, 0.1, 0.3, Shift::Upper, &table3()), 0.0);
        assert!(finite_size_bound(1.0, 100.0, 0.1, 0.3, Shift::Lower, &table3()) < 0.0);
    }

    #[test]
    fn degenerate_and_violating_intensities() {
        let ch = ChannelInput { n_routed: 1e10, n_sent: 1e10, eta_tot: 0.25 };
        let sec = table3();
        let deg = ProtocolParams { mu2: sec.mu3, ..params() };
        assert_eq!(s0_bound(Basis::X, &ch, &deg, &sec), Err(KeyRateError::DegenerateIntensities));
        assert_eq!(vz1_bound(&ch, &deg, &sec), Err(KeyRateError::DegenerateIntensities));
        let tight = ProtocolParams { mu1: 0.1 + sec.mu3, ..params() };
        assert_eq!(s1_bound(Basis::X, &ch, &tight, &sec, 0.0), Err(KeyRateError::ConstraintViolated));
        assert_eq!(key_length(&ch, &tight, &sec), Err(KeyRateError::ConstraintViolated));
    }

    #[test]
    fn noiseless_vacuum_decoy_has_no_zero_photon_events() {
        let sec = SecurityParams { p_dc: 0.0, e_mis: 0.0, mu3: 0.0, ..table3() };
        let ch = ChannelInput { n_routed: 1e12, n_sent: 1e12, eta_tot: 0.5 };
        assert_eq!(s0_bound(Basis::X, &ch, &params(), &sec).unwrap(), 0.0);
        // no errors at all: v_z1 is pure finite-size residual, which the
        // vanishing error total also removes
        assert_eq!(vz1_bound(&ch, &params(), &sec).unwrap(), 0.0);
    }

    #[test]
    fn gamma_domain_and_symmetry() {
        assert!(gamma_term(1e-10, 0.0, 1e5, 1e5).is_err());
        assert!(gamma_term(1e-10, 1.0, 1e5, 1e5).is_err());
        assert!(gamma_term(1e-10, 0.1, 0.0, 1e5).is_err());
        let a = gamma_term(1e-10, 0.02, 3e5, 7e6).unwrap();
        let b = gamma_term(1e-10, 0.02, 7e6, 3e5).unwrap();
        assert!((a - b).abs() <= 1e-15 * a);
        let near0 = gamma_term(1e-10, 1e-300, 1e5, 1e5).unwrap();
        assert!(near0 < 1e-140);
    }

    #[test]
    fn phase_error_guards() {
        let sec = table3();
        assert_eq!(phase_error(0.0, 1e6, 0.0, &sec), Err(KeyRateError::InsufficientStatistics));
        assert_eq!(phase_error(1e6, 0.0, 0.0, &sec), Err(KeyRateError::InsufficientStatistics));
        assert_eq!(phase_error(1e6, 1e6, 6e5, &sec).unwrap(), 0.5);
        let p = phase_error(1e12, 1e12, 1e6, &sec).unwrap();
        assert!(p > 1e-6 && p < 1e-4);
    }

    #[test]
    fn noise_dominated_channel_has_no_key() {
        let ch = ChannelInput { n_routed: 1e10, n_sent: 1e10, eta_tot: 1e-9 };
        let k = key_length(&ch, &params(), &table3()).unwrap();
        assert!(k.e_obs > 0.45);
        assert_eq!(k.ell, 0.0);
        assert!(k.reason.is_some());
    }

    #[test]
    fn rate_scaling() {
        let ch = ChannelInput { n_routed: 3.75e10, n_sent: 3.75e10, eta_tot: 0.2512 };
        let k = key_length(&ch, &params(), &table3()).unwrap();
        assert!(k.ell > 0.0);
        assert_eq!(k.rate_per_sent, k.rate_per_routed);
        let ch2 = ChannelInput { n_sent: 5e10, ..ch };
        let k2 = key_length(&ch2, &params(), &table3()).unwrap();
        assert_eq!(k2.ell, k.ell);
        assert!((k2.rate_per_sent * 5e10 - k2.ell).abs() <= 1e-6 * k2.ell);
        assert!((k2.rate_per_routed * 3.75e10 - k2.ell).abs() <= 1e-6 * k2.ell);
    }

    #[test]
    fn invalid_inputs_rejected() {
        let ch = ChannelInput { n_routed: 2.0, n_sent: 1.0, eta_tot: 0.5 };
        assert!(matches!(key_length(&ch, &params(), &table3()), Err(KeyRateError::InvalidChannel(_))));
        let ch = ChannelInput { n_routed: 1.0, n_sent: 1.0, eta_tot: 0.5 };
        let p = ProtocolParams { p_mu1: 0.6, p_mu2: 0.4, ..params() };
        assert!(matches!(key_length(&ch, &p, &table3()), Err(KeyRateError::InvalidParams(_))));
        let sec = SecurityParams { f_ec: 0.9, ..table3() };
        assert!(matches!(key_length(&ch, &params(), &sec), Err(KeyRateError::InvalidSecurity(_))));
    }
}
