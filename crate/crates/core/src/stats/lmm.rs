//! Random-intercept linear mixed model
//! `y = b0 + b1*A + b2*A^2 + u_user + e`, fitted by (restricted) maximum
//! likelihood.
//!
//! With `lambda = var(u) / var(e)`, each user's inverse covariance (in units
//! of `var(e)`) is `I - c 11'` with `c = lambda / (1 + n lambda)`. For fixed
//! lambda, beta and `var(e)` have closed forms, so the likelihood is profiled
//! down to one dimension and maximised over `log lambda`.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

const P: usize = 3;
const LOG_LAMBDA_MIN: f64 = -25.0;
const LOG_LAMBDA_MAX: f64 = 15.0;
const GRID_STEP: f64 = 0.5;
const Z_95: f64 = 1.96;
const COEF_NAMES: [&str; P] = ["intercept", "attention", "attention_sq"];

type Mat = [[f64; P]; P];
type Vector = [f64; P];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimation {
    Ml,
    Reml,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmmOptions {
    pub estimation: Estimation,
    pub max_iter: usize,
    /// Stop when the bracket on `log lambda` is narrower than this.
    pub tol: f64,
    /// Skip the search and use this variance ratio.
    pub fixed_lambda: Option<f64>,
}

impl Default for LmmOptions {
    fn default() -> Self {
        Self {
            estimation: Estimation::Ml,
            max_iter: 200,
            tol: 1e-8,
            fixed_lambda: None,
        }
    }
}

/// Observations: user, attention level and response.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LmmData {
    pub groups: Vec<String>,
    pub attention: Vec<f64>,
    pub y: Vec<f64>,
}

impl LmmData {
    /// Response time in seconds against attention.
    pub fn from_dataset(d: &Dataset) -> Self {
        let r = d.records();
        Self {
            groups: r.iter().map(|r| r.user_id.clone()).collect(),
            attention: r.iter().map(|r| f64::from(r.attention)).collect(),
            y: r.iter().map(|r| r.response_time_s as f64).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub z: f64,
    pub p: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmmFit {
    pub estimation: Estimation,
    pub coefficients: Vec<Coefficient>,
    /// Random-intercept variance.
    pub group_var: f64,
    pub residual_var: f64,
    pub lambda: f64,
    /// Predicted random intercept per user.
    pub blups: BTreeMap<String, f64>,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    pub n_obs: usize,
    pub n_groups: usize,
}

impl LmmFit {
    pub fn beta(&self) -> [f64; P] {
        [
            self.coefficients[0].estimate,
            self.coefficients[1].estimate,
            self.coefficients[2].estimate,
        ]
    }
}

/// Per-user sufficient statistics, in order of first appearance.
struct Group {
    id: String,
    rows: Vec<usize>,
    sx: Vector,
    sxx: Mat,
    sxy: Vector,
    sy: f64,
}

struct Prepared<'a> {
    data: &'a LmmData,
    groups: Vec<Group>,
}

fn design(a: f64) -> Vector {
    [1.0, a, a * a]
}

impl<'a> Prepared<'a> {
    fn new(data: &'a LmmData) -> Result<Self> {
        let n = data.y.len();
        if data.groups.len() != n || data.attention.len() != n {
            return Err(Error::InvalidInput("groups, attention and y differ in length".into()));
        }
        if data.y.iter().chain(&data.attention).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("mixed model inputs must be finite".into()));
        }
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut groups: Vec<Group> = Vec::new();
        for i in 0..n {
            let g = *index.entry(data.groups[i].as_str()).or_insert_with(|| {
                groups.push(Group {
                    id: data.groups[i].clone(),
                    rows: Vec::new(),
                    sx: [0.0; P],
                    sxx: [[0.0; P]; P],
                    sxy: [0.0; P],
                    sy: 0.0,
                });
                groups.len() - 1
            });
            let x = design(data.attention[i]);
            let grp = &mut groups[g];
            grp.rows.push(i);
            for a in 0..P {
                grp.sx[a] += x[a];
                grp.sxy[a] += x[a] * data.y[i];
                for b in 0..P {
                    grp.sxx[a][b] += x[a] * x[b];
                }
            }
            grp.sy += data.y[i];
        }
        if groups.len() < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 users, found {}", groups.len())));
        }
        let mut levels: Vec<f64> = data.attention.clone();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        if levels.len() < 4 {
            return Err(Error::InvalidInput(format!(
                "need at least 4 distinct attention values, found {}",
                levels.len()
            )));
        }
        Ok(Self { data, groups })
    }

    fn n(&self) -> usize {
        self.data.y.len()
    }

    /// GLS quantities at a variance ratio.
    fn solve(&self, lambda: f64) -> Result<Profile> {
        let mut xtwx = [[0.0; P]; P];
        let mut xtwy = [0.0; P];
        let mut log_det_h = 0.0;
        for g in &self.groups {
            let ni = g.rows.len() as f64;
            let c = lambda / (1.0 + ni * lambda);
            log_det_h += (ni * lambda).ln_1p();
            for a in 0..P {
                xtwy[a] += g.sxy[a] - c * g.sx[a] * g.sy;
                for b in 0..P {
                    xtwx[a][b] += g.sxx[a][b] - c * g.sx[a] * g.sx[b];
                }
            }
        }
        let chol = cholesky(&xtwx).ok_or_else(|| {
            Error::InvalidInput("fixed-effect design is singular".into())
        })?;
        let beta = chol_solve(&chol, &xtwy);
        let mut rwr = 0.0;
        let mut mean_resid = Vec::with_capacity(self.groups.len());
        for g in &self.groups {
            let ni = g.rows.len() as f64;
            let c = lambda / (1.0 + ni * lambda);
            let (mut s, mut ss) = (0.0, 0.0);
            for &i in &g.rows {
                let x = design(self.data.attention[i]);
                let r = self.data.y[i] - (beta[0] * x[0] + beta[1] * x[1] + beta[2] * x[2]);
                s += r;
                ss += r * r;
            }
            rwr += ss - c * s * s;
            mean_resid.push(s / ni);
        }
        let log_det_xtwx = 2.0 * (0..P).map(|a| chol[a][a].ln()).sum::<f64>();
        Ok(Profile {
            lambda,
            beta,
            xtwx_chol: chol,
            rwr,
            log_det_h,
            log_det_xtwx,
            mean_resid,
        })
    }

    fn log_lik(&self, pr: &Profile, est: Estimation) -> f64 {
        let n = self.n() as f64;
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        match est {
            Estimation::Ml => {
                let s2 = pr.rwr / n;
                -0.5 * (n * ln2pi + n * s2.ln() + pr.log_det_h + n)
            }
            Estimation::Reml => {
                let m = n - P as f64;
                let s2 = pr.rwr / m;
                -0.5 * (m * ln2pi + m * s2.ln() + pr.log_det_h + pr.log_det_xtwx + m)
            }
        }
    }
}

struct Profile {
    lambda: f64,
    beta: Vector,
    xtwx_chol: Mat,
    rwr: f64,
    log_det_h: f64,
    log_det_xtwx: f64,
    mean_resid: Vec<f64>,
}

fn cholesky(a: &Mat) -> Option<Mat> {
    let mut l = [[0.0; P]; P];
    for i in 0..P {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if !(d > 0.0) {
                    return None;
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Some(l)
}

fn chol_solve(l: &Mat, b: &Vector) -> Vector {
    let mut z = [0.0; P];
    for i in 0..P {
        z[i] = (b[i] - (0..i).map(|k| l[i][k] * z[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = [0.0; P];
    for i in (0..P).rev() {
        x[i] = (z[i] - (i + 1..P).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    x
}

fn chol_inverse(l: &Mat) -> Mat {
    let mut inv = [[0.0; P]; P];
    for j in 0..P {
        let mut e = [0.0; P];
        e[j] = 1.0;
        let col = chol_solve(l, &e);
        for i in 0..P {
            inv[i][j] = col[i];
        }
    }
    inv
}

/// Profiled log-likelihood at a variance ratio.
pub fn profile_log_likelihood(data: &LmmData, lambda: f64, estimation: Estimation) -> Result<f64> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!("variance ratio {lambda} must be finite and non-negative")));
    }
    let prep = Prepared::new(data)?;
    let pr = prep.solve(lambda)?;
    Ok(prep.log_lik(&pr, estimation))
}

/// Maximum-likelihood fit of response time on attention and its square,
/// with a random intercept per user.
pub fn fit_lmm(d: &Dataset) -> Result<LmmFit> {
    fit_lmm_data(&LmmData::from_dataset(d), &LmmOptions::default())
}

pub fn fit_lmm_data(data: &LmmData, opts: &LmmOptions) -> Result<LmmFit> {
    let prep = Prepared::new(data)?;
    let est = opts.estimation;
    let (best, converged, iterations) = match opts.fixed_lambda {
        Some(l) if l >= 0.0 && l.is_finite() => (prep.solve(l)?, true, 0),
        Some(l) => return Err(Error::InvalidInput(format!("fixed variance ratio {l} is invalid"))),
        None => search(&prep, opts)?,
    };
    let n = prep.n() as f64;
    let sigma2 = match est {
        Estimation::Ml => best.rwr / n,
        Estimation::Reml => best.rwr / (n - P as f64),
    };
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidInput("residual variance is zero; the model fits exactly".into()));
    }
    let cov = chol_inverse(&best.xtwx_chol);
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let coefficients = (0..P)
        .map(|a| {
            let estimate = best.beta[a];
            let se = (sigma2 * cov[a][a]).sqrt();
            let z = estimate / se;
            Coefficient {
                name: COEF_NAMES[a].to_string(),
                estimate,
                se,
                z,
                p: 2.0 * normal.sf(z.abs()),
                ci_low: estimate - Z_95 * se,
                ci_high: estimate + Z_95 * se,
            }
        })
        .collect();
    let blups = prep
        .groups
        .iter()
        .zip(&best.mean_resid)
        .map(|(g, &m)| {
            let nl = g.rows.len() as f64 * best.lambda;
            (g.id.clone(), nl / (1.0 + nl) * m)
        })
        .collect();
    Ok(LmmFit {
        estimation: est,
        coefficients,
        group_var: best.lambda * sigma2,
        residual_var: sigma2,
        lambda: best.lambda,
        blups,
        log_likelihood: prep.log_lik(&best, est),
        converged,
        iterations,
        n_obs: prep.n(),
        n_groups: prep.groups.len(),
    })
}

/// Grid over `log lambda`, then golden-section refinement around the best
/// grid point. `lambda = 0` competes as its own candidate.
fn search(prep: &Prepared<'_>, opts: &LmmOptions) -> Result<(Profile, bool, usize)> {
    let est = opts.estimation;
    let ll = |theta: f64| -> Result<(f64, Profile)> {
        let pr = prep.solve(theta.exp())?;
        Ok((prep.log_lik(&pr, est), pr))
    };
    let n_grid = ((LOG_LAMBDA_MAX - LOG_LAMBDA_MIN) / GRID_STEP).round() as usize;
    let grid: Vec<f64> = (0..=n_grid).map(|k| LOG_LAMBDA_MIN + k as f64 * GRID_STEP).collect();
    let mut values = Vec::with_capacity(grid.len());
    for &t in &grid {
        values.push(ll(t)?.0);
    }
    let k = (0..grid.len()).fold(0, |b, i| if values[i] > values[b] { i } else { b });
    let zero = prep.solve(0.0)?;
    let ll_zero = prep.log_lik(&zero, est);
    if k == 0 && ll_zero >= values[0] {
        return Ok((zero, true, 0));
    }

    let invphi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (grid[k.saturating_sub(1)], grid[(k + 1).min(grid.len() - 1)]);
    let mut x1 = hi - invphi * (hi - lo);
    let mut x2 = lo + invphi * (hi - lo);
    let (mut f1, mut f2) = (ll(x1)?.0, ll(x2)?.0);
    let mut it = 0;
    while hi - lo > opts.tol {
        if it >= opts.max_iter {
            return Err(Error::NoConvergence {
                iterations: it,
                lo: lo.exp(),
                hi: hi.exp(),
            });
        }
        it += 1;
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - invphi * (hi - lo);
            f1 = ll(x1)?.0;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + invphi * (hi - lo);
            f2 = ll(x2)?.0;
        }
    }
    let (f, pr) = ll((lo + hi) / 2.0)?;
    if ll_zero > f {
        return Ok((zero, true, it));
    }
    Ok((pr, true, it))
}

#[cfg(test)]
mod tests;
