//! The event structure shared by every independent-fading engine.
//!
//! With the source-relay gains independent of the destination's gains, all
//! event probabilities follow from three families of "not yet decoded"
//! probabilities:
//!
//! * `Fr(m)`: the relay has not decoded after hearing rounds `1..=m`,
//! * `Fd(m)`: the destination has not decoded after rounds `1..=m` from the source,
//! * `H_j(k)`: the destination has not decoded after round `k` when the relay
//!   decoded in round `j` and sent rounds `j+1..=k`, so `H_j(j) = Fd(j)`.

use serde::Serialize;

use crate::error::Result;
use crate::types::EventProbabilities;

pub(crate) trait MissModel {
    fn m_max(&self) -> usize;
    fn relay_miss(&self, m: usize) -> Result<f64>;
    fn dest_miss(&self, m: usize) -> Result<f64>;
    /// `H_j(j)`; engines that approximate the relayed terms may override it.
    fn relayed_start(&self, j: usize) -> Result<f64> {
        self.dest_miss(j)
    }
    /// `H_j(k)` for `1 <= j < k <= M+1`.
    fn relayed_miss(&self, j: usize, k: usize) -> Result<f64>;
}

/// Intermediate terms of the event probabilities.
///
/// Index conventions (all 1-based rounds stored 0-based):
/// `alpha[m-1]` relay decodes in `m <= M` and the destination does not;
/// `beta[m-1]` destination decodes in `m <= M+1` while the relay has not decoded before `m`;
/// `gamma` neither has decoded after `M` rounds;
/// `eps[j-1][m-1]` relay decodes in `j`, destination then decodes in `m`;
/// `vartheta[n-1]` relay decodes in `n` and keeps transmitting through round `M+1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventTerms {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: f64,
    pub eps: Vec<Vec<f64>>,
    pub vartheta: Vec<f64>,
}

/// [`EventTerms`] together with the relay factors they were built from:
/// `omega[j-1]` relay first decodes in round `j`, `theta[j-1][m-1]` the relayed
/// destination first decodes in `m`, `rho[n-1]` it has not decoded after round `M`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorTerms {
    pub terms: EventTerms,
    pub omega: Vec<f64>,
    pub theta: Vec<Vec<f64>>,
    pub rho: Vec<f64>,
}

impl EventTerms {
    pub fn events(&self) -> EventProbabilities {
        let m_max = self.alpha.len();
        let k = m_max + 1;
        let mut ev = EventProbabilities::zeros(m_max);
        for m in 1..=k {
            let relayed: f64 = (1..m).map(|j| self.eps[j - 1][m - 1]).sum();
            ev.a[m - 1] = self.beta[m - 1] + relayed;
            if m <= m_max {
                ev.s[m - 1] = self.alpha[m - 1] + self.beta[m - 1];
            }
        }
        ev.s[m_max] = self.gamma;
        for n in 1..=m_max {
            for m in n + 1..=m_max {
                ev.b[n - 1][m - 1] = self.eps[n - 1][m - 1];
            }
            ev.b[n - 1][m_max] = self.vartheta[n - 1];
        }
        ev
    }
}

fn nonneg(x: f64) -> f64 {
    x.max(0.0)
}

pub(crate) fn factor_terms<M: MissModel + ?Sized>(model: &M) -> Result<FactorTerms> {
    let m_max = model.m_max();
    let k = m_max + 1;
    let mut fr = Vec::with_capacity(k + 1);
    let mut fd = Vec::with_capacity(k + 1);
    fr.push(1.0);
    fd.push(1.0);
    for m in 1..=k {
        fr.push(model.relay_miss(m)?);
        fd.push(model.dest_miss(m)?);
    }
    let alpha: Vec<f64> = (1..=m_max).map(|m| nonneg(fr[m - 1] - fr[m]) * fd[m]).collect();
    let beta: Vec<f64> = (1..=k).map(|m| nonneg(fd[m - 1] - fd[m]) * fr[m - 1]).collect();
    let gamma = fd[m_max] * fr[m_max];
    let omega: Vec<f64> = (1..=m_max).map(|j| nonneg(fr[j - 1] - fr[j])).collect();

    let mut theta = vec![vec![0.0; k]; k];
    let mut rho = vec![0.0; m_max];
    let mut eps = vec![vec![0.0; k]; k];
    let mut vartheta = vec![0.0; m_max];
    for j in 1..=m_max {
        let start = model.relayed_start(j)?;
        let mut prev = start;
        for m in j + 1..=k {
            let h = model.relayed_miss(j, m)?.min(prev);
            theta[j - 1][m - 1] = nonneg(prev - h);
            eps[j - 1][m - 1] = omega[j - 1] * theta[j - 1][m - 1];
            if m == m_max {
                rho[j - 1] = h;
            }
            prev = h;
        }
        if j == m_max {
            rho[j - 1] = start;
        }
        vartheta[j - 1] = omega[j - 1] * rho[j - 1];
    }
    Ok(FactorTerms {
        terms: EventTerms {
            alpha,
            beta,
            gamma,
            eps,
            vartheta,
        },
        omega,
        theta,
        rho,
    })
}
