//! Fast fading: every link gain is redrawn in each round.
//!
//! The event structure is the quasi-static one; only the decoding
//! probabilities change. RTD needs the CDF of a weighted sum of independent
//! exponentials (partial fractions, or a phase-type matrix exponential when
//! poles collide); INR needs the CDF of a sum of per-round mutual informations,
//! evaluated by nested quadrature.

use crate::error::{Error, Result};
use crate::events::{factor_terms, FactorTerms, MissModel};
use crate::special::{clamp_probability, exp_cdf, integrate, QuadOptions};
use crate::types::{ChannelParams, Coding, EventProbabilities, PowerAllocation, Protocol, ProtocolConfig};

/// One round's contribution: gain rate `lambda` and transmit power `power`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub lambda: f64,
    pub power: f64,
}

impl Branch {
    pub fn new(lambda: f64, power: f64) -> Self {
        Branch { lambda, power }
    }

    fn silent(&self) -> bool {
        self.power == 0.0 || self.lambda.is_infinite()
    }
}

/// Poles closer than this (relative) are treated as one repeated pole.
const POLE_COLLISION: f64 = 1e-4;

fn quad_opts() -> QuadOptions {
    QuadOptions {
        rel_tol: 1e-10,
        abs_tol: 1e-15,
        max_subdivisions: 2000,
    }
}

/// `Pr(Σ_i P_i g_i < c)` for independent `g_i ~ Exp(lambda_i)`.
pub fn weighted_exp_sum_cdf(branches: &[Branch], c: f64) -> Result<f64> {
    if c <= 0.0 {
        return Ok(0.0);
    }
    if c.is_infinite() {
        return Ok(1.0);
    }
    let mut mu: Vec<f64> = branches
        .iter()
        .filter(|b| !b.silent())
        .map(|b| b.lambda / b.power)
        .collect();
    mu.sort_by(|a, b| a.total_cmp(b));
    let p = sum_cdf(&mu, c)?;
    clamp_probability(p, "sum-of-exponentials CDF")
}

fn sum_cdf(mu: &[f64], c: f64) -> Result<f64> {
    match mu.len() {
        0 => return Ok(1.0),
        1 => return Ok(exp_cdf(mu[0], c)),
        _ => {}
    }
    if colliding_pole(mu) {
        return Ok(1.0 - phase_type_survival(mu, c));
    }
    // partial fractions: 1 - Σ_i a_i e^{-mu_i c}, a_i = Π_{k≠i} mu_k / (mu_k - mu_i)
    let mut tail = 0.0;
    for (i, &mi) in mu.iter().enumerate() {
        let mut a = 1.0;
        for (k, &mk) in mu.iter().enumerate() {
            if k != i {
                a *= mk / (mk - mi);
            }
        }
        tail += a * (-mi * c).exp();
    }
    Ok(1.0 - tail)
}

fn colliding_pole(mu: &[f64]) -> bool {
    // `mu` is sorted, neighbours are enough
    (1..mu.len()).any(|i| (mu[i] - mu[i - 1]).abs() <= POLE_COLLISION * mu[i].max(mu[i - 1]))
}

/// Survival function of the sum, as the first row sum of `exp(T c)` for the
/// bidiagonal generator `T` (`-mu_i` on the diagonal, `mu_i` above it).
/// Scaling and squaring with a Taylor core; well defined for repeated poles.
fn phase_type_survival(mu: &[f64], c: f64) -> f64 {
    let n = mu.len();
    let norm = mu.iter().fold(0.0f64, |a, &m| a.max(2.0 * m * c));
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let h = c / f64::from(squarings).exp2();
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        a[i][i] = -mu[i] * h;
        if i + 1 < n {
            a[i][i + 1] = mu[i] * h;
        }
    }
    // Taylor series of exp(A), ||A|| <= 1/2
    let mut e = identity(n);
    let mut term = identity(n);
    for k in 1..=20 {
        term = matmul(&term, &a);
        let inv = 1.0 / f64::from(k);
        for row in term.iter_mut() {
            for v in row.iter_mut() {
                *v *= inv;
            }
        }
        for i in 0..n {
            for j in i..n {
                e[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        e = matmul(&e, &e);
    }
    e[0].iter().sum::<f64>().clamp(0.0, 1.0)
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

// upper triangular product
fn matmul(x: &[Vec<f64>], y: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut z = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in i..n {
            let xik = x[i][k];
            if xik == 0.0 {
                continue;
            }
            for j in k..n {
                z[i][j] += xik * y[k][j];
            }
        }
    }
    z
}

/// `Pr(Σ_i log(1 + P_i g_i) <= r)` by nested quadrature over the rounds.
pub fn sumlog_cdf(branches: &[Branch], r: f64) -> Result<f64> {
    if r <= 0.0 {
        return Ok(0.0);
    }
    if r.is_infinite() {
        return Ok(1.0);
    }
    let live: Vec<Branch> = branches.iter().copied().filter(|b| !b.silent()).collect();
    let p = sumlog_rec(&live, r)?;
    clamp_probability(p, "sum-of-log CDF")
}

fn round_cdf(b: &Branch, y: f64) -> f64 {
    exp_cdf(b.lambda, y.exp_m1() / b.power)
}

fn sumlog_rec(live: &[Branch], r: f64) -> Result<f64> {
    if r <= 0.0 {
        return Ok(0.0);
    }
    match live.len() {
        0 => return Ok(1.0),
        1 => return Ok(round_cdf(&live[0], r)),
        _ => {}
    }
    let first = live[0];
    let rest = &live[1..];
    let top = round_cdf(&first, r);
    let scale = first.power / first.lambda;
    let failed = std::cell::RefCell::new(None);
    let q = integrate(
        |u: f64| {
            // inverse CDF of log(1 + P g)
            let y = (scale * -(-u).ln_1p()).ln_1p();
            match sumlog_rec(rest, r - y) {
                Ok(v) => v,
                Err(e) => {
                    failed.borrow_mut().get_or_insert(e);
                    0.0
                }
            }
        },
        0.0,
        top,
        &quad_opts(),
    );
    if let Some(e) = failed.into_inner() {
        return Err(e);
    }
    Ok(q?.value)
}

fn dest_branches(ch: &ChannelParams, pw: &PowerAllocation, j: usize, m: usize) -> Vec<Branch> {
    let direct = pw.source[..j].iter().map(|&p| Branch::new(ch.lambda_sd, p));
    let relayed = pw.relay[j..m].iter().map(|&p| Branch::new(ch.lambda_rd, p));
    direct.chain(relayed).collect()
}

/// `Pr(log(1 + Σ_{i<=j} P^s_i g^sd_i + Σ_{j<i<=m} P^r_i g^rd_i) <= r)`.
pub fn ff_mrc_cdf(ch: &ChannelParams, pw: &PowerAllocation, j: usize, m: usize, r_threshold: f64) -> Result<f64> {
    weighted_exp_sum_cdf(&dest_branches(ch, pw, j, m), r_threshold.exp_m1())
}

/// `Pr(Σ_{i<=j} log(1 + P^s_i g^sd_i) + Σ_{j<i<=m} log(1 + P^r_i g^rd_i) <= r)`.
pub fn ff_sumlog_cdf(ch: &ChannelParams, pw: &PowerAllocation, j: usize, m: usize, r_threshold: f64) -> Result<f64> {
    sumlog_cdf(&dest_branches(ch, pw, j, m), r_threshold)
}

struct FastModel<'a> {
    ch: &'a ChannelParams,
    pw: &'a PowerAllocation,
    protocol: Protocol,
    m_max: usize,
    rate: f64,
}

impl FastModel<'_> {
    fn cdf(&self, branches: &[Branch]) -> Result<f64> {
        match self.protocol {
            Protocol::Rtd => weighted_exp_sum_cdf(branches, self.rate.exp_m1()),
            Protocol::Inr => sumlog_cdf(branches, self.rate),
        }
    }
}

impl MissModel for FastModel<'_> {
    fn m_max(&self) -> usize {
        self.m_max
    }

    fn relay_miss(&self, m: usize) -> Result<f64> {
        let b: Vec<Branch> = self.pw.source[..m]
            .iter()
            .map(|&p| Branch::new(self.ch.lambda_sr, p))
            .collect();
        if self.ch.lambda_sr.is_infinite() {
            return Ok(1.0);
        }
        self.cdf(&b)
    }

    fn dest_miss(&self, m: usize) -> Result<f64> {
        self.cdf(&dest_branches(self.ch, self.pw, m, m))
    }

    fn relayed_miss(&self, j: usize, k: usize) -> Result<f64> {
        self.cdf(&dest_branches(self.ch, self.pw, j, k))
    }
}

pub fn ff_terms(ch: &ChannelParams, cfg: &ProtocolConfig, pw: &PowerAllocation) -> Result<FactorTerms> {
    ch.validate()?;
    cfg.validate()?;
    pw.validate(cfg.m_max)?;
    if cfg.coding != Coding::FixedLength {
        return Err(Error::config("fast fading is modelled with fixed-length coding only"));
    }
    if pw.source[0] <= 0.0 {
        return Err(Error::InvalidPower("first-round source power is zero".into()));
    }
    let model = FastModel {
        ch,
        pw,
        protocol: cfg.protocol,
        m_max: cfg.m_max,
        rate: cfg.initial_rate(),
    };
    factor_terms(&model)
}

pub fn ff_event_probs(ch: &ChannelParams, cfg: &ProtocolConfig, pw: &PowerAllocation) -> Result<EventProbabilities> {
    Ok(ff_terms(ch, cfg, pw)?.terms.events())
}
