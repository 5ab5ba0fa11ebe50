//! Picks the analytical model that matches a configuration and turns its
//! event probabilities into metrics.

use serde::{Deserialize, Serialize};

use crate::correlated::{corr_rtd_event_probs, CorrelatedChannel};
use crate::error::{Error, Result};
use crate::fast::ff_event_probs;
use crate::inr::{inr_event_probs, InrMode};
use crate::metrics;
use crate::noisy::noisy_rtd_m1_metrics;
use crate::rtd::rtd_event_probs;
use crate::types::{
    ChannelParams, EventProbabilities, FadingMode, FeedbackNoise, Metrics, PowerAllocation, Protocol, ProtocolConfig,
};

/// Which closed form an evaluation used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Rtd,
    Inr(InrMode),
    FastRtd,
    FastInr,
    CorrelatedRtd,
    NoisyRtdM1,
}

impl EngineKind {
    pub fn name(&self) -> &'static str {
        match self {
            EngineKind::Rtd => "rtd",
            EngineKind::Inr(InrMode::Exact2D) => "inr_exact2d",
            EngineKind::Inr(InrMode::LowSnrApprox) => "inr_low_snr",
            EngineKind::Inr(InrMode::LowerBoundT1) => "inr_lower_bound",
            EngineKind::Inr(InrMode::UpperBoundT2) => "inr_upper_bound",
            EngineKind::FastRtd => "fast_rtd",
            EngineKind::FastInr => "fast_inr",
            EngineKind::CorrelatedRtd => "correlated_rtd",
            EngineKind::NoisyRtdM1 => "noisy_rtd_m1",
        }
    }

    /// The engine that handles `ch`/`cfg`/`fb`, or a configuration error.
    pub fn select(ch: &ChannelParams, cfg: &ProtocolConfig, fb: &FeedbackNoise, inr_mode: InrMode) -> Result<Self> {
        let exact_inr = |what: &str| {
            if cfg.protocol == Protocol::Inr && inr_mode != InrMode::Exact2D {
                Err(Error::config(format!(
                    "INR mode {} is only defined for {what}",
                    inr_mode.name()
                )))
            } else {
                Ok(())
            }
        };
        if !fb.is_noiseless() {
            if cfg.protocol == Protocol::Rtd
                && cfg.m_max == 1
                && ch.fading == FadingMode::QuasiStatic
                && ch.delta == 0.0
            {
                return Ok(EngineKind::NoisyRtdM1);
            }
            return Err(Error::config(
                "noisy feedback has a closed form only for RTD, M = 1, independent quasi-static links; use the Monte Carlo engine",
            ));
        }
        match (ch.fading, ch.delta > 0.0, cfg.protocol) {
            (FadingMode::FastFading, true, _) => Err(Error::config("correlated fast fading is not modelled")),
            (FadingMode::FastFading, false, Protocol::Rtd) => Ok(EngineKind::FastRtd),
            (FadingMode::FastFading, false, Protocol::Inr) => {
                exact_inr("quasi-static fading")?;
                Ok(EngineKind::FastInr)
            }
            (FadingMode::QuasiStatic, true, Protocol::Rtd) => Ok(EngineKind::CorrelatedRtd),
            (FadingMode::QuasiStatic, true, Protocol::Inr) => {
                Err(Error::config("correlated links are modelled for RTD only"))
            }
            (FadingMode::QuasiStatic, false, Protocol::Rtd) => Ok(EngineKind::Rtd),
            (FadingMode::QuasiStatic, false, Protocol::Inr) => Ok(EngineKind::Inr(inr_mode)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub engine: EngineKind,
    pub metrics: Metrics,
    /// Absent for the noisy-feedback closed form, which yields metrics only.
    pub events: Option<EventProbabilities>,
}

pub fn event_probs(
    kind: EngineKind,
    ch: &ChannelParams,
    cfg: &ProtocolConfig,
    pw: &PowerAllocation,
) -> Result<EventProbabilities> {
    match kind {
        EngineKind::Rtd => rtd_event_probs(ch, cfg, pw),
        EngineKind::Inr(mode) => inr_event_probs(ch, cfg, pw, mode),
        EngineKind::FastRtd | EngineKind::FastInr => ff_event_probs(ch, cfg, pw),
        EngineKind::CorrelatedRtd => corr_rtd_event_probs(&CorrelatedChannel::from_params(ch)?, cfg, pw),
        EngineKind::NoisyRtdM1 => Err(Error::config(
            "the noisy-feedback closed form yields metrics, not events",
        )),
    }
}

/// Metrics of one configuration with an automatically selected engine.
pub fn evaluate(
    ch: &ChannelParams,
    cfg: &ProtocolConfig,
    pw: &PowerAllocation,
    fb: &FeedbackNoise,
    inr_mode: InrMode,
) -> Result<Evaluation> {
    let engine = EngineKind::select(ch, cfg, fb, inr_mode)?;
    evaluate_with(engine, ch, cfg, pw, fb)
}

pub fn evaluate_with(
    engine: EngineKind,
    ch: &ChannelParams,
    cfg: &ProtocolConfig,
    pw: &PowerAllocation,
    fb: &FeedbackNoise,
) -> Result<Evaluation> {
    if engine == EngineKind::NoisyRtdM1 {
        cfg.validate()?;
        if cfg.protocol != Protocol::Rtd || cfg.m_max != 1 {
            return Err(Error::config("the noisy-feedback closed form needs RTD with M = 1"));
        }
        let metrics = noisy_rtd_m1_metrics(ch, pw, cfg.initial_rate(), fb)?;
        return Ok(Evaluation {
            engine,
            metrics,
            events: None,
        });
    }
    let ev = event_probs(engine, ch, cfg, pw)?;
    let metrics = metrics::assemble(&ev, cfg, pw)?;
    Ok(Evaluation {
        engine,
        metrics,
        events: Some(ev),
    })
}
