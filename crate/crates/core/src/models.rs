//! Assembled forecasting models behind a uniform predict/absorb interface:
//! the optimum-output LSTM network, the prototype LSTM, a GRU, the
//! persistence algorithm, and the naive constant regressor.
//!
//! `predict_next` never mutates a model; `absorb` is the only way state
//! advances. Recurrent models with look-back 1 run continually: the carry
//! (h, c, θ) persists across consecutive events and moves only on absorb.
//! A look-back L > 1 (LSTM/GRU only) switches to a stateless sliding
//! window that is replayed from zeros on every update.

use crate::cells::{
    gru_forward, lstm_forward, optm_forward, GruState, GruWeights, LstmWeights, RepoConfig,
};
use crate::error::{Error, Result};
use crate::learning::{
    bptt_grads, gru_bptt_grads, optm_local_grads, HeadWeights, OptKind, OptimizerState,
};
use crate::lob::{mid_price, LobEvent, NormMode, Normalizer};
use crate::numerics::{Rng, Vec1};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    OptmLstm,
    Lstm,
    Gru,
    Persistence,
    Naive,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::OptmLstm => "optm_lstm",
            ModelKind::Lstm => "lstm",
            ModelKind::Gru => "gru",
            ModelKind::Persistence => "persistence",
            ModelKind::Naive => "naive",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "optm" | "optm_lstm" => Ok(ModelKind::OptmLstm),
            "lstm" => Ok(ModelKind::Lstm),
            "gru" => Ok(ModelKind::Gru),
            "persistence" => Ok(ModelKind::Persistence),
            "naive" => Ok(ModelKind::Naive),
            other => Err(Error::Config(format!(
                "unknown model kind '{other}' (expected optm, lstm, gru, persistence, or naive)"
            ))),
        }
    }
}

/// Declarative model description. Defaults follow the winning shallow
/// topology: one recurrent layer into a Dense(4) → Dense(1) linear head,
/// Adam, batch 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub units: usize,
    pub head: Vec<usize>,
    pub look_back: usize,
    pub optimizer: OptKind,
    pub learning_rate: f64,
    /// Max-norm gradient clip; off by default.
    #[serde(default)]
    pub clip_norm: Option<f64>,
    pub repo: RepoConfig,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            units: 4,
            head: vec![4, 1],
            look_back: 1,
            optimizer: OptKind::Adam,
            learning_rate: 1e-3,
            clip_norm: None,
            repo: RepoConfig::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.units == 0 {
            return Err(Error::Config("units must be positive".into()));
        }
        if self.head.last() != Some(&1) {
            return Err(Error::Config("head must end in a single unit".into()));
        }
        if self.look_back == 0 {
            return Err(Error::Config("look_back must be at least 1".into()));
        }
        if self.kind == ModelKind::OptmLstm && self.look_back != 1 {
            return Err(Error::Config(
                "the optimum-output cell runs with look_back = 1".into(),
            ));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if let Some(clip) = self.clip_norm {
            if clip.is_nan() || clip <= 0.0 {
                return Err(Error::Config(format!(
                    "clip norm must be positive, got {clip}"
                )));
            }
        }
        self.repo.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct OptmCore {
    weights: LstmWeights,
    head: HeadWeights,
    opt: OptimizerState,
    carry_h: Vec1,
    carry_c: Vec1,
    theta: Vec1,
    selection_counts: [u64; 6],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct LstmCore {
    weights: LstmWeights,
    head: HeadWeights,
    opt: OptimizerState,
    carry_h: Vec1,
    carry_c: Vec1,
    /// Sliding window of (features, label) pairs when look_back > 1.
    window: Vec<(Vec1, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct GruCore {
    weights: GruWeights,
    head: HeadWeights,
    opt: OptimizerState,
    carry_h: Vec1,
    window: Vec<(Vec1, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct NaiveCore {
    sum: f64,
    count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "core")]
enum ModelCore {
    OptmLstm(OptmCore),
    Lstm(LstmCore),
    Gru(GruCore),
    Persistence,
    Naive(NaiveCore),
}

/// A forecasting model: spec, parameters, recurrent carry, and the fitted
/// normalizer. Predictions are scalars in scaled-price units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub spec: ModelSpec,
    normalizer: Normalizer,
    core: ModelCore,
    events_seen: u64,
}

impl Model {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = Rng::seeded(spec.seed);
        let units = spec.units;
        let inputs = crate::lob::FEATURES;
        let core = match spec.kind {
            ModelKind::OptmLstm => ModelCore::OptmLstm(OptmCore {
                weights: LstmWeights::glorot(units, inputs, &mut rng),
                head: HeadWeights::glorot(units, &spec.head, &mut rng),
                opt: OptimizerState::new(spec.optimizer, spec.learning_rate),
                carry_h: Vec1::zeros(units),
                carry_c: Vec1::zeros(units),
                theta: Vec1::zeros(6 * units),
                selection_counts: [0; 6],
            }),
            ModelKind::Lstm => ModelCore::Lstm(LstmCore {
                weights: LstmWeights::glorot(units, inputs, &mut rng),
                head: HeadWeights::glorot(units, &spec.head, &mut rng),
                opt: OptimizerState::new(spec.optimizer, spec.learning_rate),
                carry_h: Vec1::zeros(units),
                carry_c: Vec1::zeros(units),
                window: Vec::new(),
            }),
            ModelKind::Gru => ModelCore::Gru(GruCore {
                weights: GruWeights::glorot(units, inputs, &mut rng),
                head: HeadWeights::glorot(units, &spec.head, &mut rng),
                opt: OptimizerState::new(spec.optimizer, spec.learning_rate),
                carry_h: Vec1::zeros(units),
                window: Vec::new(),
            }),
            ModelKind::Persistence => ModelCore::Persistence,
            ModelKind::Naive => ModelCore::Naive(NaiveCore { sum: 0.0, count: 0 }),
        };
        Ok(Self {
            spec,
            normalizer: identity_normalizer(),
            core,
            events_seen: 0,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn events_seen(&self) -> u64 {
        self.events_seen
    }

    /// Per-component selection counts of the optimum-output cell, in
    /// repository order; `None` for every other model kind.
    pub fn selection_counts(&self) -> Option<[u64; 6]> {
        match &self.core {
            ModelCore::OptmLstm(core) => Some(core.selection_counts),
            _ => None,
        }
    }

    /// Fits the feature/label statistics on the training window. Must run
    /// before training when a normalization mode is active.
    pub fn fit_normalizer(&mut self, mode: NormMode, window: &[LobEvent]) -> Result<()> {
        self.normalizer = Normalizer::fit(mode, window)?;
        Ok(())
    }

    /// Clears the recurrent carry (h, c, θ) for a fresh pass over a
    /// sequence. Parameters are untouched.
    pub fn reset_carry(&mut self) {
        match &mut self.core {
            ModelCore::OptmLstm(core) => {
                core.carry_h = Vec1::zeros(self.spec.units);
                core.carry_c = Vec1::zeros(self.spec.units);
                core.theta = Vec1::zeros(6 * self.spec.units);
            }
            ModelCore::Lstm(core) => {
                core.carry_h = Vec1::zeros(self.spec.units);
                core.carry_c = Vec1::zeros(self.spec.units);
                core.window.clear();
            }
            ModelCore::Gru(core) => {
                core.carry_h = Vec1::zeros(self.spec.units);
                core.window.clear();
            }
            ModelCore::Persistence | ModelCore::Naive(_) => {}
        }
    }

    /// Predicts the next mid-price from the current event, de-normalized to
    /// scaled-price units. Pure: the model is unchanged.
    pub fn predict_next(&self, e: &LobEvent) -> Result<f64> {
        match &self.core {
            ModelCore::Persistence => Ok(mid_price(e)),
            ModelCore::Naive(core) => {
                if core.count == 0 {
                    return Err(Error::State(
                        "naive regressor queried before any target was absorbed".into(),
                    ));
                }
                Ok(core.sum / core.count as f64)
            }
            ModelCore::OptmLstm(core) => {
                let x = self.normalizer.apply(e);
                let y_current = self.normalizer.normalize_label(mid_price(e));
                let (_, repo) = optm_forward(
                    &core.weights,
                    &x,
                    &core.carry_h,
                    &core.carry_c,
                    y_current,
                    &self.spec.repo,
                    &core.theta,
                )?;
                Ok(self
                    .normalizer
                    .denormalize_label(core.head.forward(&repo.h_new)))
            }
            ModelCore::Lstm(core) => {
                let x = self.normalizer.apply(e);
                let h = if self.spec.look_back == 1 {
                    lstm_forward(&core.weights, &x, &core.carry_h, &core.carry_c).h
                } else {
                    // Replay the last L−1 absorbed inputs, then the current one.
                    let mut h = Vec1::zeros(self.spec.units);
                    let mut c = Vec1::zeros(self.spec.units);
                    for (past_x, _) in window_tail(&core.window, self.spec.look_back - 1) {
                        let s = lstm_forward(&core.weights, past_x, &h, &c);
                        h = s.h;
                        c = s.c;
                    }
                    lstm_forward(&core.weights, &x, &h, &c).h
                };
                Ok(self.normalizer.denormalize_label(core.head.forward(&h)))
            }
            ModelCore::Gru(core) => {
                let x = self.normalizer.apply(e);
                let h = if self.spec.look_back == 1 {
                    gru_forward(&core.weights, &x, &core.carry_h).h
                } else {
                    let mut h = Vec1::zeros(self.spec.units);
                    for (past_x, _) in window_tail(&core.window, self.spec.look_back - 1) {
                        h = gru_forward(&core.weights, past_x, &h).h;
                    }
                    gru_forward(&core.weights, &x, &h).h
                };
                Ok(self.normalizer.denormalize_label(core.head.forward(&h)))
            }
        }
    }

    /// Absorbs one revealed (event, next mid-price) pair: runs `epochs`
    /// gradient updates on it and advances the recurrent carry to this
    /// event's outputs. Returns the squared error of the pre-update
    /// prediction in the model's internal (normalized) units.
    pub fn absorb(&mut self, e: &LobEvent, y_next: f64, epochs: usize) -> Result<f64> {
        assert!(epochs >= 1, "absorb: epochs must be >= 1");
        self.events_seen += 1;
        let x = self.normalizer.apply(e);
        let y = self.normalizer.normalize_label(y_next);
        let y_guarantor = self.normalizer.normalize_label(mid_price(e));
        let look_back = self.spec.look_back;
        let units = self.spec.units;
        let clip = self.spec.clip_norm;
        match &mut self.core {
            ModelCore::Persistence => {
                let err = y_guarantor - y;
                Ok(err * err)
            }
            ModelCore::Naive(core) => {
                let before = if core.count == 0 {
                    None
                } else {
                    Some(
                        self.normalizer
                            .normalize_label(core.sum / core.count as f64),
                    )
                };
                core.sum += y_next;
                core.count += 1;
                // The very first target has no prior prediction to score.
                Ok(before.map_or(0.0, |p| (p - y) * (p - y)))
            }
            ModelCore::OptmLstm(core) => {
                let repo_cfg = self.spec.repo;
                let mut first_err = 0.0;
                let mut last = None;
                for epoch in 0..epochs {
                    let (state, repo) = optm_forward(
                        &core.weights,
                        &x,
                        &core.carry_h,
                        &core.carry_c,
                        y_guarantor,
                        &repo_cfg,
                        &core.theta,
                    )?;
                    if epoch == 0 {
                        let err = core.head.forward(&repo.h_new) - y;
                        first_err = err * err;
                    }
                    let mut grads =
                        optm_local_grads(repo.selected, &state, &core.weights, &core.head, y)?;
                    apply_lstm_update(
                        &mut core.opt,
                        &mut core.weights,
                        &mut core.head,
                        &mut grads,
                        clip,
                    );
                    last = Some((state, repo));
                }
                let (state, repo) = last.expect("epochs >= 1");
                core.carry_h = repo.h_new;
                core.carry_c = state.c;
                core.theta = repo.theta;
                core.selection_counts[repo.selected.index() - 1] += 1;
                Ok(first_err)
            }
            ModelCore::Lstm(core) => {
                if look_back > 1 {
                    push_window(&mut core.window, (x.clone(), y), look_back);
                }
                let mut first_err = 0.0;
                let mut last_state = None;
                for epoch in 0..epochs {
                    let (trajectory, labels) = if look_back == 1 {
                        (
                            vec![lstm_forward(
                                &core.weights,
                                &x,
                                &core.carry_h,
                                &core.carry_c,
                            )],
                            vec![y],
                        )
                    } else {
                        let mut h = Vec1::zeros(units);
                        let mut c = Vec1::zeros(units);
                        let mut trajectory = Vec::with_capacity(core.window.len());
                        let mut labels = Vec::with_capacity(core.window.len());
                        for (wx, wy) in &core.window {
                            let s = lstm_forward(&core.weights, wx, &h, &c);
                            h = s.h.clone();
                            c = s.c.clone();
                            trajectory.push(s);
                            labels.push(*wy);
                        }
                        (trajectory, labels)
                    };
                    if epoch == 0 {
                        let err = core.head.forward(&trajectory.last().unwrap().h) - y;
                        first_err = err * err;
                    }
                    let mut grads = bptt_grads(&core.weights, &core.head, &trajectory, &labels)?;
                    apply_lstm_update(
                        &mut core.opt,
                        &mut core.weights,
                        &mut core.head,
                        &mut grads,
                        clip,
                    );
                    last_state = trajectory.into_iter().last();
                }
                let state = last_state.expect("epochs >= 1");
                core.carry_h = state.h;
                core.carry_c = state.c;
                Ok(first_err)
            }
            ModelCore::Gru(core) => {
                if look_back > 1 {
                    push_window(&mut core.window, (x.clone(), y), look_back);
                }
                let mut first_err = 0.0;
                let mut last_state: Option<GruState> = None;
                for epoch in 0..epochs {
                    let (trajectory, labels) = if look_back == 1 {
                        (vec![gru_forward(&core.weights, &x, &core.carry_h)], vec![y])
                    } else {
                        let mut h = Vec1::zeros(units);
                        let mut trajectory = Vec::with_capacity(core.window.len());
                        let mut labels = Vec::with_capacity(core.window.len());
                        for (wx, wy) in &core.window {
                            let s = gru_forward(&core.weights, wx, &h);
                            h = s.h.clone();
                            trajectory.push(s);
                            labels.push(*wy);
                        }
                        (trajectory, labels)
                    };
                    if epoch == 0 {
                        let err = core.head.forward(&trajectory.last().unwrap().h) - y;
                        first_err = err * err;
                    }
                    let mut grads =
                        gru_bptt_grads(&core.weights, &core.head, &trajectory, &labels)?;
                    apply_gru_update(
                        &mut core.opt,
                        &mut core.weights,
                        &mut core.head,
                        &mut grads,
                        clip,
                    );
                    last_state = trajectory.into_iter().last();
                }
                core.carry_h = last_state.expect("epochs >= 1").h;
                Ok(first_err)
            }
        }
    }
}

fn apply_lstm_update(
    opt: &mut OptimizerState,
    weights: &mut LstmWeights,
    head: &mut HeadWeights,
    grads: &mut crate::learning::Gradients,
    clip: Option<f64>,
) {
    if let Some(max) = clip {
        let mut g: Vec<&mut [f64]> = grads.cell.tensors_mut().into();
        g.extend(grads.head.tensors_mut());
        crate::learning::clip_max_norm(&mut g, max);
    }
    let mut params: Vec<&mut [f64]> = weights.tensors_mut().into();
    params.extend(head.tensors_mut());
    let mut grad_slices: Vec<&[f64]> = grads.cell.tensors().into();
    grad_slices.extend(grads.head.tensors());
    opt.step(&mut params, &grad_slices);
}

fn apply_gru_update(
    opt: &mut OptimizerState,
    weights: &mut GruWeights,
    head: &mut HeadWeights,
    grads: &mut crate::learning::GruGradients,
    clip: Option<f64>,
) {
    if let Some(max) = clip {
        let mut g: Vec<&mut [f64]> = grads.cell.tensors_mut().into();
        g.extend(grads.head.tensors_mut());
        crate::learning::clip_max_norm(&mut g, max);
    }
    let mut params: Vec<&mut [f64]> = weights.tensors_mut().into();
    params.extend(head.tensors_mut());
    let mut grad_slices: Vec<&[f64]> = grads.cell.tensors().into();
    grad_slices.extend(grads.head.tensors());
    opt.step(&mut params, &grad_slices);
}

fn window_tail(window: &[(Vec1, f64)], n: usize) -> &[(Vec1, f64)] {
    &window[window.len().saturating_sub(n)..]
}

fn push_window(window: &mut Vec<(Vec1, f64)>, item: (Vec1, f64), cap: usize) {
    window.push(item);
    if window.len() > cap {
        window.remove(0);
    }
}

fn identity_normalizer() -> Normalizer {
    let mut e = LobEvent {
        ask_prices: [0; crate::lob::LEVELS],
        ask_volumes: [0; crate::lob::LEVELS],
        bid_prices: [0; crate::lob::LEVELS],
        bid_volumes: [0; crate::lob::LEVELS],
    };
    for level in 0..crate::lob::LEVELS {
        e.ask_prices[level] = 1 + level as i64;
        e.bid_prices[level] = -(level as i64);
    }
    Normalizer::fit(NormMode::Raw, &[e]).expect("raw mode never degenerates")
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format_version: u32,
    model: Model,
}

/// Serializes the full model (spec, parameters, optimizer state, carry,
/// fitted normalizer) to a versioned JSON checkpoint. Round-trips are
/// bit-exact on every tensor.
pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let checkpoint = Checkpoint {
        format_version: CHECKPOINT_VERSION,
        model: model.clone(),
    };
    let json = serde_json::to_string_pretty(&checkpoint)?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    let json = std::fs::read_to_string(path)?;
    let checkpoint: Checkpoint = serde_json::from_str(&json)?;
    if checkpoint.format_version != CHECKPOINT_VERSION {
        return Err(Error::Config(format!(
            "unsupported checkpoint version {} (this build reads version {CHECKPOINT_VERSION})",
            checkpoint.format_version
        )));
    }
    Ok(checkpoint.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::HeadWeights;
    use crate::lob::{generate_synthetic, Regime};

    fn stream_of(n: usize, seed: u64) -> crate::lob::LobStream {
        generate_synthetic(n, Regime::RandomWalk, seed).unwrap()
    }

    #[test]
    fn persistence_predicts_current_mid() {
        let model = Model::new(ModelSpec::new(ModelKind::Persistence)).unwrap();
        let stream = stream_of(5, 1);
        for e in &stream.events {
            assert_eq!(model.predict_next(e).unwrap(), mid_price(e));
        }
    }

    #[test]
    fn persistence_absorb_is_a_no_op_on_state() {
        let mut model = Model::new(ModelSpec::new(ModelKind::Persistence)).unwrap();
        let reference = model.clone();
        let stream = stream_of(5, 2);
        model.absorb(&stream.events[0], 42.0, 3).unwrap();
        assert_eq!(model.core, reference.core);
    }

    #[test]
    fn naive_tracks_running_mean() {
        let mut model = Model::new(ModelSpec::new(ModelKind::Naive)).unwrap();
        let stream = stream_of(5, 3);
        let e = &stream.events[0];
        assert!(matches!(model.predict_next(e), Err(Error::State(_))));

        for y in [1.0, 2.0, 3.0] {
            model.absorb(e, y, 1).unwrap();
        }
        assert_eq!(model.predict_next(e).unwrap(), 2.0);

        model.absorb(e, 4.0, 1).unwrap();
        assert_eq!(model.predict_next(e).unwrap(), 2.5);
    }

    #[test]
    fn optm_with_zero_weights_and_alpha_zero_predicts_zero() {
        let mut spec = ModelSpec::new(ModelKind::OptmLstm);
        spec.repo.alpha = 0.0;
        let mut model = Model::new(spec).unwrap();
        if let ModelCore::OptmLstm(core) = &mut model.core {
            core.weights = LstmWeights::zeros(4, crate::lob::FEATURES);
            core.head = HeadWeights::zeros(4, &[4, 1]);
        }
        let stream = stream_of(5, 4);
        for e in &stream.events {
            assert_eq!(model.predict_next(e).unwrap(), 0.0);
        }
    }

    #[test]
    fn predict_never_mutates() {
        for kind in [ModelKind::OptmLstm, ModelKind::Lstm, ModelKind::Gru] {
            let model = Model::new(ModelSpec::new(kind)).unwrap();
            let reference = model.clone();
            let stream = stream_of(3, 5);
            let first = model.predict_next(&stream.events[0]).unwrap();
            let second = model.predict_next(&stream.events[0]).unwrap();
            assert_eq!(first, second);
            assert_eq!(model, reference);
        }
    }

    #[test]
    fn sgd_zero_learning_rate_keeps_parameters() {
        let mut spec = ModelSpec::new(ModelKind::Lstm);
        spec.optimizer = OptKind::Sgd;
        spec.learning_rate = 1e-12; // validate() rejects exactly zero
        let mut model = Model::new(spec).unwrap();
        if let ModelCore::Lstm(core) = &mut model.core {
            core.opt = OptimizerState::new(OptKind::Sgd, 0.0);
        }
        let before = match &model.core {
            ModelCore::Lstm(core) => (core.weights.clone(), core.head.clone()),
            _ => unreachable!(),
        };
        let stream = stream_of(4, 6);
        model
            .absorb(&stream.events[0], mid_price(&stream.events[1]), 2)
            .unwrap();
        match &model.core {
            ModelCore::Lstm(core) => {
                assert_eq!(core.weights, before.0);
                assert_eq!(core.head, before.1);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn fixed_seed_gives_bit_identical_prediction_sequences() {
        let stream = stream_of(40, 7);
        for kind in [
            ModelKind::OptmLstm,
            ModelKind::Lstm,
            ModelKind::Gru,
            ModelKind::Persistence,
            ModelKind::Naive,
        ] {
            let run = || -> Vec<f64> {
                let mut spec = ModelSpec::new(kind);
                spec.seed = 99;
                let mut model = Model::new(spec).unwrap();
                model
                    .fit_normalizer(NormMode::MinMax, &stream.events[..20])
                    .unwrap();
                let mut predictions = Vec::new();
                for t in 0..stream.len() - 1 {
                    let e = &stream.events[t];
                    let y = mid_price(&stream.events[t + 1]);
                    model.absorb(e, y, 1).unwrap();
                    predictions.push(model.predict_next(e).unwrap());
                }
                predictions
            };
            let (a, b) = (run(), run());
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(x.to_bits(), y.to_bits(), "kind {kind:?}");
            }
        }
    }

    #[test]
    fn lstm_window_mode_trains_and_predicts() {
        let mut spec = ModelSpec::new(ModelKind::Lstm);
        spec.look_back = 3;
        let mut model = Model::new(spec).unwrap();
        let stream = stream_of(30, 8);
        model
            .fit_normalizer(NormMode::MinMax, &stream.events[..20])
            .unwrap();
        for t in 0..20 {
            model
                .absorb(&stream.events[t], mid_price(&stream.events[t + 1]), 1)
                .unwrap();
        }
        let prediction = model.predict_next(&stream.events[20]).unwrap();
        assert!(prediction.is_finite());
    }

    #[test]
    fn max_norm_clip_keeps_aggressive_training_finite() {
        let mut spec = ModelSpec::new(ModelKind::Lstm);
        spec.optimizer = OptKind::Sgd;
        spec.learning_rate = 5.0; // wild on raw ×10⁴-scale targets
        spec.clip_norm = Some(1.0);
        let mut model = Model::new(spec).unwrap();
        let stream = stream_of(60, 12);
        for t in 0..50 {
            model
                .absorb(&stream.events[t], mid_price(&stream.events[t + 1]), 1)
                .unwrap();
        }
        assert!(model.predict_next(&stream.events[50]).unwrap().is_finite());
    }

    #[test]
    fn selection_counts_accumulate_per_absorb() {
        let mut model = Model::new(ModelSpec::new(ModelKind::OptmLstm)).unwrap();
        let stream = stream_of(30, 9);
        model
            .fit_normalizer(NormMode::MinMax, &stream.events[..20])
            .unwrap();
        for t in 0..20 {
            model
                .absorb(&stream.events[t], mid_price(&stream.events[t + 1]), 1)
                .unwrap();
        }
        let counts = model.selection_counts().unwrap();
        assert_eq!(counts.iter().sum::<u64>(), 20);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let stream = stream_of(30, 10);
        for kind in [
            ModelKind::OptmLstm,
            ModelKind::Lstm,
            ModelKind::Gru,
            ModelKind::Persistence,
            ModelKind::Naive,
        ] {
            let mut model = Model::new(ModelSpec::new(kind)).unwrap();
            model
                .fit_normalizer(NormMode::Zscore, &stream.events[..20])
                .unwrap();
            for t in 0..10 {
                model
                    .absorb(&stream.events[t], mid_price(&stream.events[t + 1]), 1)
                    .unwrap();
            }
            save_checkpoint(&model, &path).unwrap();
            let restored = load_checkpoint(&path).unwrap();
            assert_eq!(restored, model, "kind {kind:?}");

            // The restored model behaves identically.
            let e = &stream.events[15];
            let (a, b) = (
                model.predict_next(e).unwrap(),
                restored.predict_next(e).unwrap(),
            );
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
