//! Two-sample Kolmogorov-Smirnov checks of the samplers against
//! inverse-CDF draws from CDFs tabulated by numerical integration of their
//! densities.

use scfm_core::rngdist::{
    sample_gamma, sample_gig, sample_inverse_gamma, sample_truncated_normal, RngStream, StreamRng,
};

pub const KS_DRAWS: usize = 100_000;

/// Asymptotic two-sample KS critical value at level 0.001 for equal sizes.
pub fn ks_critical(n: usize) -> f64 {
    1.9495 * (2.0 / n as f64).sqrt()
}

/// A CDF tabulated on a fine grid by trapezoidal integration.
pub struct Tabulated {
    x: Vec<f64>,
    cdf: Vec<f64>,
}

const FINE: usize = 400_001;

impl Tabulated {
    fn from_log_density(lo: f64, hi: f64, log_f: impl Fn(f64) -> f64) -> Self {
        let h = (hi - lo) / (FINE - 1) as f64;
        let x: Vec<f64> = (0..FINE).map(|i| lo + h * i as f64).collect();
        let lf: Vec<f64> = x.iter().map(|&v| log_f(v)).collect();
        let top = lf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let f: Vec<f64> = lf.iter().map(|&v| (v - top).exp()).collect();
        let mut cdf = vec![0.0; FINE];
        for i in 1..FINE {
            cdf[i] = cdf[i - 1] + 0.5 * h * (f[i] + f[i - 1]);
        }
        let total = cdf[FINE - 1];
        cdf.iter_mut().for_each(|c| *c /= total);
        Tabulated { x, cdf }
    }

    /// Positive law given by its log density in `y`; tabulated on `t = ln y`
    /// over the range where the density is within `e^{-45}` of its peak.
    pub fn positive(log_f: impl Fn(f64) -> f64) -> Self {
        let log_g = |t: f64| log_f(t.exp()) + t;
        let (lo, hi, steps) = (-700.0, 60.0, 40_000);
        let h = (hi - lo) / steps as f64;
        let grid: Vec<(f64, f64)> = (0..=steps)
            .map(|i| {
                let t = lo + h * i as f64;
                (t, log_g(t))
            })
            .collect();
        let top = grid.iter().map(|g| g.1).fold(f64::NEG_INFINITY, f64::max);
        let inside: Vec<f64> = grid.iter().filter(|g| g.1 > top - 45.0).map(|g| g.0).collect();
        let (a, b) = (inside[0] - h, inside[inside.len() - 1] + h);
        let mut tab = Self::from_log_density(a.max(lo), b.min(hi), log_g);
        tab.x.iter_mut().for_each(|t| *t = t.exp());
        tab
    }

    /// Inverse of the piecewise-linear CDF.
    pub fn inverse(&self, u: f64) -> f64 {
        let i = self.cdf.partition_point(|&c| c < u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let w = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        self.x[i - 1] + w * (self.x[i] - self.x[i - 1])
    }

    pub fn cdf(&self, v: f64) -> f64 {
        let i = self.x.partition_point(|&x| x <= v);
        if i == 0 {
            return 0.0;
        }
        if i == self.x.len() {
            return 1.0;
        }
        let (x0, x1) = (self.x[i - 1], self.x[i]);
        let w = (v - x0) / (x1 - x0);
        self.cdf[i - 1] + w * (self.cdf[i] - self.cdf[i - 1])
    }
}

/// `KS_DRAWS` inverse-CDF draws from a tabulated law.
pub fn oracle_sample(tab: &Tabulated, stream: u64) -> Vec<f64> {
    use rand::Rng;
    let mut rng = RngStream::new(77, stream).rng();
    (0..KS_DRAWS).map(|_| tab.inverse(rng.random::<f64>())).collect()
}

/// `sup_x |F_a(x) − F_b(x)|` between two empirical CDFs.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    scfm_core::postprocess::ks_distance(a, b)
}

pub struct OracleCase {
    pub family: &'static str,
    pub setting: String,
    pub d: f64,
    pub critical: f64,
}

impl OracleCase {
    pub fn passes(&self) -> bool {
        self.d <= self.critical
    }
}

fn run_case(
    family: &'static str,
    setting: String,
    stream: u64,
    tab: Tabulated,
    mut draw: impl FnMut(&mut StreamRng) -> f64,
) -> OracleCase {
    let mut rng = RngStream::new(20_240_601, stream).rng();
    let sample: Vec<f64> = (0..KS_DRAWS).map(|_| draw(&mut rng)).collect();
    OracleCase {
        family,
        setting,
        d: ks_two_sample(&sample, &oracle_sample(&tab, stream)),
        critical: ks_critical(KS_DRAWS),
    }
}

pub const TRUNCNORM_SETTINGS: [(f64, f64, f64, f64); 7] = [
    (0.0, 1.0, 6.0, 7.0),
    (0.0, 1.0, -1.0, 1.0),
    (0.0, 1.0, 0.0, f64::INFINITY),
    (0.0, 1.0, f64::NEG_INFINITY, -3.0),
    (0.0, 1.0, 2.0, 2.05),
    (1.5, 0.4, -0.5, 0.2),
    (-2.0, 3.0, -1.0, 25.0),
];

pub fn truncnorm_cases() -> Vec<OracleCase> {
    TRUNCNORM_SETTINGS
        .iter()
        .enumerate()
        .map(|(c, &(mu, sd, lo, hi))| {
            let a = if lo.is_finite() { lo } else { mu - 14.0 * sd };
            let b = if hi.is_finite() { hi } else { mu + 14.0 * sd };
            let tab = Tabulated::from_log_density(a, b, |x| -0.5 * ((x - mu) / sd).powi(2));
            run_case(
                "truncated normal",
                format!("N({mu}, {sd}²) on ({lo}, {hi}]"),
                c as u64,
                tab,
                |rng| sample_truncated_normal(mu, sd, lo, hi, rng).unwrap(),
            )
        })
        .collect()
}

/// `(κ, ρ, χ)` spanning every internal regime of the sampler.
pub const GIG_SETTINGS: [(f64, f64, f64); 8] = [
    (-0.5, 1.0, 1.0),
    (0.5, 0.1, 0.1),
    (0.5, 1.0, 1e-4),
    (3.0, 2.0, 1.0),
    (1.2, 4.0, 4.0),
    (-2.5, 1.0, 0.5),
    (0.0, 1.0, 0.3),
    (2.0, 1.0, 0.0),
];

pub fn gig_cases() -> Vec<OracleCase> {
    GIG_SETTINGS
        .iter()
        .enumerate()
        .map(|(c, &(kappa, rho, chi))| {
            let tab = Tabulated::positive(|y| (kappa - 1.0) * y.ln() - 0.5 * (rho * y + chi / y));
            run_case(
                "giG",
                format!("giG({kappa}, {rho}, {chi})"),
                100 + c as u64,
                tab,
                |rng| sample_gig(kappa, rho, chi, rng).unwrap(),
            )
        })
        .collect()
}

/// `(shape, rate)`
pub const GAMMA_SETTINGS: [(f64, f64); 5] = [(0.1, 1.0), (0.5, 2.0), (1.0, 1.0), (3.7, 0.5), (50.0, 10.0)];

pub fn gamma_cases() -> Vec<OracleCase> {
    GAMMA_SETTINGS
        .iter()
        .enumerate()
        .map(|(c, &(shape, rate))| {
            let tab = Tabulated::positive(|y| (shape - 1.0) * y.ln() - rate * y);
            run_case(
                "gamma",
                format!("Gamma(shape {shape}, rate {rate})"),
                200 + c as u64,
                tab,
                |rng| sample_gamma(shape, rate, rng).unwrap(),
            )
        })
        .collect()
}

/// `(shape, scale)`
pub const INVERSE_GAMMA_SETTINGS: [(f64, f64); 5] =
    [(0.1, 0.1), (1.1, 0.5), (3.0, 2.0), (10.5, 4.0), (250.0, 300.0)];

pub fn inverse_gamma_cases() -> Vec<OracleCase> {
    INVERSE_GAMMA_SETTINGS
        .iter()
        .enumerate()
        .map(|(c, &(a, b))| {
            let tab = Tabulated::positive(|y| -(a + 1.0) * y.ln() - b / y);
            run_case(
                "inverse gamma",
                format!("IG(shape {a}, scale {b})"),
                300 + c as u64,
                tab,
                |rng| sample_inverse_gamma(a, b, rng).unwrap(),
            )
        })
        .collect()
}

pub fn all_cases() -> Vec<OracleCase> {
    let mut v = truncnorm_cases();
    v.extend(gig_cases());
    v.extend(gamma_cases());
    v.extend(inverse_gamma_cases());
    v
}
