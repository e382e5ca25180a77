//! Arbitrary-precision reference evaluation of the finite-key decoy BB84
//! pipeline. Written straight from the formulas, sharing no code with the
//! engine. Every intermediate is computed at `PREC` bits and only rounded to
//! f64 at the end.

use astro_float::{BigFloat, Consts, Radix, RoundingMode};

const PREC: usize = 320;
const RM: RoundingMode = RoundingMode::ToEven;

pub struct Ar {
    cc: Consts,
}

impl Ar {
    pub fn new() -> Self {
        Self { cc: Consts::new().expect("constants cache") }
    }
    pub fn num(&self, x: f64) -> BigFloat {
        BigFloat::from_f64(x, PREC)
    }
    pub fn add(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.add(b, PREC, RM)
    }
    pub fn sub(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.sub(b, PREC, RM)
    }
    pub fn mul(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.mul(b, PREC, RM)
    }
    pub fn div(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.div(b, PREC, RM)
    }
    pub fn sqrt(&self, a: &BigFloat) -> BigFloat {
        a.sqrt(PREC, RM)
    }
    pub fn exp(&mut self, a: &BigFloat) -> BigFloat {
        a.exp(PREC, RM, &mut self.cc)
    }
    pub fn ln(&mut self, a: &BigFloat) -> BigFloat {
        a.ln(PREC, RM, &mut self.cc)
    }
    pub fn log2(&mut self, a: &BigFloat) -> BigFloat {
        a.log2(PREC, RM, &mut self.cc)
    }
    pub fn to_f64(&mut self, a: &BigFloat) -> f64 {
        if a.is_zero() {
            return 0.0;
        }
        let s = a.format(Radix::Dec, RM, &mut self.cc).expect("format");
        s.parse().unwrap_or_else(|_| panic!("unparseable {s}"))
    }
    fn clamp(&self, x: &BigFloat, hi: &BigFloat) -> BigFloat {
        let zero = self.num(0.0);
        if *x < zero {
            zero
        } else if x > hi {
            hi.clone()
        } else {
            x.clone()
        }
    }
    fn entropy(&mut self, x: &BigFloat) -> BigFloat {
        let one = self.num(1.0);
        if x.is_zero() || *x == one {
            return self.num(0.0);
        }
        let y = self.sub(&one, x);
        let a = self.log2(x);
        let b = self.log2(&y);
        let t = self.add(&self.mul(x, &a), &self.mul(&y, &b));
        t.neg()
    }
    fn factorial(&self, n: u32) -> BigFloat {
        (1..=n).fold(self.num(1.0), |acc, i| self.mul(&acc, &self.num(i as f64)))
    }
}

pub struct OracleInput {
    pub n_routed: f64,
    pub n_sent: f64,
    pub eta: f64,
    pub q_x: f64,
    pub p: [f64; 3],
    pub mu: [f64; 3],
    pub f_ec: f64,
    pub eps_cor: f64,
    pub eps_sec: f64,
    pub p_dc: f64,
    pub eta_bob: f64,
    pub e_mis: f64,
}

#[derive(Debug, Clone, Default)]
pub struct OracleOutput {
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
    /// None when the single-photon bounds vanish
    pub phi_x: Option<f64>,
    pub e_obs: f64,
    pub ell_pre_floor: f64,
}

/// n-photon emission probability of the three-intensity source.
pub fn tau(ar: &mut Ar, n: u32, mu: &[f64; 3], p: &[f64; 3]) -> BigFloat {
    let mut acc = ar.num(0.0);
    let nf = ar.factorial(n);
    for i in 0..3 {
        let k = ar.num(mu[i]);
        let e = ar.exp(&k.neg());
        let kn = k.powi(n as usize, PREC, RM);
        let term = ar.div(&ar.mul(&ar.mul(&e, &kn), &ar.num(p[i])), &nf);
        acc = ar.add(&acc, &term);
    }
    acc
}

/// gamma(a, b, c, d) uncertainty term.
pub fn gamma(ar: &mut Ar, a: &BigFloat, b: &BigFloat, c: &BigFloat, d: &BigFloat) -> BigFloat {
    let one = ar.num(1.0);
    let cd = ar.mul(c, d);
    let bb = ar.mul(&ar.sub(&one, b), b);
    let cpd = ar.add(c, d);
    let ln2 = ar.ln(&ar.num(2.0));
    let pre = ar.div(&ar.mul(&cpd, &bb), &ar.mul(&cd, &ln2));
    let arg = ar.div(&ar.mul(&ar.div(&cpd, &ar.mul(&cd, &bb)), &ar.num(441.0)), &ar.mul(a, a));
    let l = ar.log2(&arg);
    ar.sqrt(&ar.mul(&pre, &l))
}

pub fn gamma_f64(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let mut ar = Ar::new();
    let (a, b, c, d) = (ar.num(a), ar.num(b), ar.num(c), ar.num(d));
    let g = gamma(&mut ar, &a, &b, &c, &d);
    ar.to_f64(&g)
}

pub fn tau_f64(n: u32, mu: [f64; 3], p: [f64; 3]) -> f64 {
    let mut ar = Ar::new();
    let t = tau(&mut ar, n, &mu, &p);
    ar.to_f64(&t)
}

/// Finite-size shifted count (e^k/p_k)(count ± sqrt(total/2 ln(21/eps))).
pub fn shifted(ar: &mut Ar, count: &BigFloat, total: &BigFloat, k: f64, pk: f64, eps: f64, plus: bool) -> BigFloat {
    let l = ar.ln(&ar.div(&ar.num(21.0), &ar.num(eps)));
    let dev = ar.sqrt(&ar.mul(&ar.div(total, &ar.num(2.0)), &l));
    let inner = if plus { ar.add(count, &dev) } else { ar.sub(count, &dev) };
    let ek = ar.exp(&ar.num(k));
    ar.mul(&ar.div(&ek, &ar.num(pk)), &inner)
}

pub fn shifted_f64(count: f64, total: f64, k: f64, pk: f64, eps: f64, plus: bool) -> f64 {
    let mut ar = Ar::new();
    let (c, t) = (ar.num(count), ar.num(total));
    let v = shifted(&mut ar, &c, &t, k, pk, eps, plus);
    ar.to_f64(&v)
}

struct Basis {
    n: [BigFloat; 3],
    n_tot: BigFloat,
    m: [BigFloat; 3],
    m_tot: BigFloat,
}

fn basis(ar: &mut Ar, inp: &OracleInput, sift: &BigFloat) -> Basis {
    let one = ar.num(1.0);
    let big_n = ar.num(inp.n_routed);
    let eta = ar.num(inp.eta);
    let mut n = Vec::new();
    let mut m = Vec::new();
    for i in 0..3 {
        let base = ar.mul(&ar.mul(&big_n, sift), &ar.num(inp.p[i]));
        let k = ar.num(inp.mu[i]);
        let click_exp = ar.exp(&ar.mul(&ar.mul(&eta, &ar.num(inp.eta_bob)), &k).neg());
        let dark = ar.sub(&one, &ar.mul(&ar.num(2.0), &ar.num(inp.p_dc)));
        n.push(ar.mul(&base, &ar.sub(&one, &ar.mul(&dark, &click_exp))));
        let err_exp = ar.exp(&ar.mul(&eta, &k).neg());
        let err = ar.add(&ar.num(inp.p_dc), &ar.mul(&ar.num(inp.e_mis), &ar.sub(&one, &err_exp)));
        m.push(ar.mul(&base, &err));
    }
    let n_tot = ar.add(&ar.add(&n[0], &n[1]), &n[2]);
    let m_tot = ar.add(&ar.add(&m[0], &m[1]), &m[2]);
    Basis { n: [n[0].clone(), n[1].clone(), n[2].clone()], n_tot, m: [m[0].clone(), m[1].clone(), m[2].clone()], m_tot }
}

/// (raw s0, clamped s0, raw s1, clamped s1)
fn photon_bounds(ar: &mut Ar, inp: &OracleInput, b: &Basis, tau0: &BigFloat, tau1: &BigFloat) -> [BigFloat; 4] {
    let [m1, m2, m3] = inp.mu;
    let [p1, p2, p3] = inp.p;
    let eps = inp.eps_sec;
    let n1p = shifted(ar, &b.n[0], &b.n_tot, m1, p1, eps, true);
    let n2p = shifted(ar, &b.n[1], &b.n_tot, m2, p2, eps, true);
    let n2m = shifted(ar, &b.n[1], &b.n_tot, m2, p2, eps, false);
    let n3p = shifted(ar, &b.n[2], &b.n_tot, m3, p3, eps, true);
    let n3m = shifted(ar, &b.n[2], &b.n_tot, m3, p3, eps, false);
    let (m1, m2, m3) = (ar.num(m1), ar.num(m2), ar.num(m3));

    let s0_raw = ar.mul(
        tau0,
        &ar.div(&ar.sub(&ar.mul(&m2, &n3m), &ar.mul(&m3, &n2p)), &ar.sub(&m2, &m3)),
    );
    let s0 = ar.clamp(&s0_raw, &b.n_tot);

    let sq = ar.sub(&ar.mul(&m2, &m2), &ar.mul(&m3, &m3));
    let ratio = ar.div(&sq, &ar.mul(&m1, &m1));
    let bracket = ar.sub(
        &ar.sub(&n2m, &n3p),
        &ar.mul(&ratio, &ar.sub(&n1p, &ar.div(&s0, tau0))),
    );
    let num = ar.mul(&ar.mul(tau1, &m1), &bracket);
    let den = ar.sub(&ar.mul(&m1, &ar.sub(&m2, &m3)), &sq);
    let s1_raw = ar.div(&num, &den);
    let s1 = ar.clamp(&s1_raw, &b.n_tot);
    [s0_raw, s0, s1_raw, s1]
}

pub fn evaluate(inp: &OracleInput) -> OracleOutput {
    let mut ar = Ar::new();
    let one = ar.num(1.0);
    let half = ar.num(0.5);
    let qx = ar.num(inp.q_x);
    let sift_x = ar.mul(&qx, &qx);
    let qz = ar.sub(&one, &qx);
    let sift_z = ar.mul(&qz, &qz);
    let bx = basis(&mut ar, inp, &sift_x);
    let bz = basis(&mut ar, inp, &sift_z);
    let tau0 = tau(&mut ar, 0, &inp.mu, &inp.p);
    let tau1 = tau(&mut ar, 1, &inp.mu, &inp.p);

    let [sx0_raw, sx0, sx1_raw, sx1] = photon_bounds(&mut ar, inp, &bx, &tau0, &tau1);
    let [sz0_raw, sz0, sz1_raw, sz1] = photon_bounds(&mut ar, inp, &bz, &tau0, &tau1);

    let m2p = shifted(&mut ar, &bz.m[1], &bz.m_tot, inp.mu[1], inp.p[1], inp.eps_sec, true);
    let m3m = shifted(&mut ar, &bz.m[2], &bz.m_tot, inp.mu[2], inp.p[2], inp.eps_sec, false);
    let dmu = ar.sub(&ar.num(inp.mu[1]), &ar.num(inp.mu[2]));
    let v_raw = ar.mul(&tau1, &ar.div(&ar.sub(&m2p, &m3m), &dmu));
    let v = ar.clamp(&v_raw, &bz.m_tot);

    let zero = ar.num(0.0);
    let phi = if sz1 > zero && sx1 > zero {
        let b = ar.div(&v, &sz1);
        let p = if b >= half {
            half.clone()
        } else if b.is_zero() {
            zero.clone()
        } else {
            let a = ar.num(inp.eps_sec);
            let g = gamma(&mut ar, &a, &b, &sz1, &sx1);
            let s = ar.add(&b, &g);
            if s > half { half.clone() } else { s }
        };
        Some(p)
    } else {
        None
    };

    let e_obs = ar.div(&bx.m_tot, &bx.n_tot);
    let e_cap = if e_obs > half { half.clone() } else { e_obs.clone() };
    let phi_used = phi.clone().unwrap_or_else(|| half.clone());
    let h_phi = ar.entropy(&phi_used);
    let h_e = ar.entropy(&e_cap);
    let l21 = ar.log2(&ar.div(&ar.num(21.0), &ar.num(inp.eps_sec)));
    let l2 = ar.log2(&ar.div(&ar.num(2.0), &ar.num(inp.eps_cor)));
    let mut ell = ar.add(&sx0, &sx1);
    ell = ar.sub(&ell, &ar.mul(&sx1, &h_phi));
    ell = ar.sub(&ell, &ar.mul(&ar.mul(&bx.n_tot, &ar.num(inp.f_ec)), &h_e));
    ell = ar.sub(&ell, &ar.mul(&ar.num(6.0), &l21));
    ell = ar.sub(&ell, &l2);

    OracleOutput {
        n_x: ar.to_f64(&bx.n_tot),
        n_z: ar.to_f64(&bz.n_tot),
        m_x: ar.to_f64(&bx.m_tot),
        m_z: ar.to_f64(&bz.m_tot),
        tau0: ar.to_f64(&tau0),
        tau1: ar.to_f64(&tau1),
        s_x0_raw: ar.to_f64(&sx0_raw),
        s_x1_raw: ar.to_f64(&sx1_raw),
        s_z0_raw: ar.to_f64(&sz0_raw),
        s_z1_raw: ar.to_f64(&sz1_raw),
        v_z1_raw: ar.to_f64(&v_raw),
        s_x0: ar.to_f64(&sx0),
        s_x1: ar.to_f64(&sx1),
        s_z0: ar.to_f64(&sz0),
        s_z1: ar.to_f64(&sz1),
        v_z1: ar.to_f64(&v),
        phi_x: phi.map(|p| ar.to_f64(&p)),
        e_obs: ar.to_f64(&e_obs),
        ell_pre_floor: ar.to_f64(&ell),
    }
}

/// Relative difference with an absolute floor for values that are zero in
/// both evaluations.
pub fn rel_err(got: f64, want: f64) -> f64 {
    if got == want {
        0.0
    } else {
        (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
    }
}

/// Expected detections for one intensity.
pub fn detection_f64(n_routed: f64, sift: f64, pk: f64, eta: f64, eta_bob: f64, k: f64, p_dc: f64) -> f64 {
    let mut ar = Ar::new();
    let one = ar.num(1.0);
    let x = ar.mul(&ar.mul(&ar.num(eta), &ar.num(eta_bob)), &ar.num(k));
    let e = ar.exp(&x.neg());
    let dark = ar.sub(&one, &ar.mul(&ar.num(2.0), &ar.num(p_dc)));
    let click = ar.sub(&one, &ar.mul(&dark, &e));
    let v = ar.mul(&ar.mul(&ar.mul(&ar.num(n_routed), &ar.num(sift)), &ar.num(pk)), &click);
    ar.to_f64(&v)
}
