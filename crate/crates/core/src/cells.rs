//! Recurrent cell forward passes: the prototype LSTM, a standard GRU, and
//! the optimum-output LSTM whose hidden output is replaced per event by the
//! internally most important gate or state.
//!
//! The selection works in three steps. The six gate/state vectors are
//! concatenated into a repository vector `r = [f | i | g | o | c | h]`; an
//! importance weights vector θ is fitted by a few iterations of online
//! gradient descent against the current (already known) mid-price; the
//! component with the highest per-block average weight becomes the cell's
//! hidden output. The cell state `c` always passes through unchanged.

use crate::error::{Error, Result};
use crate::numerics::{glorot_init, sigmoid, tanh, Mat2, Rng, Vec1};
use serde::{Deserialize, Serialize};

/// Trainable weights of one LSTM cell: input weights `w_*` (U×D), recurrent
/// weights `u_*` (U×U), and biases `b_*` (U). `g` is the candidate gate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmWeights {
    pub w_f: Mat2,
    pub w_i: Mat2,
    pub w_g: Mat2,
    pub w_o: Mat2,
    pub u_f: Mat2,
    pub u_i: Mat2,
    pub u_g: Mat2,
    pub u_o: Mat2,
    pub b_f: Vec1,
    pub b_i: Vec1,
    pub b_g: Vec1,
    pub b_o: Vec1,
}

impl LstmWeights {
    pub fn zeros(units: usize, inputs: usize) -> Self {
        Self {
            w_f: Mat2::zeros(units, inputs),
            w_i: Mat2::zeros(units, inputs),
            w_g: Mat2::zeros(units, inputs),
            w_o: Mat2::zeros(units, inputs),
            u_f: Mat2::zeros(units, units),
            u_i: Mat2::zeros(units, units),
            u_g: Mat2::zeros(units, units),
            u_o: Mat2::zeros(units, units),
            b_f: Vec1::zeros(units),
            b_i: Vec1::zeros(units),
            b_g: Vec1::zeros(units),
            b_o: Vec1::zeros(units),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(units: usize, inputs: usize, rng: &mut Rng) -> Self {
        Self {
            w_f: glorot_init(units, inputs, rng),
            w_i: glorot_init(units, inputs, rng),
            w_g: glorot_init(units, inputs, rng),
            w_o: glorot_init(units, inputs, rng),
            u_f: glorot_init(units, units, rng),
            u_i: glorot_init(units, units, rng),
            u_g: glorot_init(units, units, rng),
            u_o: glorot_init(units, units, rng),
            b_f: Vec1::zeros(units),
            b_i: Vec1::zeros(units),
            b_g: Vec1::zeros(units),
            b_o: Vec1::zeros(units),
        }
    }

    pub fn units(&self) -> usize {
        self.w_f.rows()
    }

    pub fn inputs(&self) -> usize {
        self.w_f.cols()
    }

    /// Tensor names in the fixed order used by [`tensors`](Self::tensors).
    pub const TENSOR_NAMES: [&'static str; 12] = [
        "w_f", "w_i", "w_g", "w_o", "u_f", "u_i", "u_g", "u_o", "b_f", "b_i", "b_g", "b_o",
    ];

    pub fn tensors(&self) -> [&[f64]; 12] {
        [
            self.w_f.as_slice(),
            self.w_i.as_slice(),
            self.w_g.as_slice(),
            self.w_o.as_slice(),
            self.u_f.as_slice(),
            self.u_i.as_slice(),
            self.u_g.as_slice(),
            self.u_o.as_slice(),
            self.b_f.as_slice(),
            self.b_i.as_slice(),
            self.b_g.as_slice(),
            self.b_o.as_slice(),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 12] {
        [
            self.w_f.as_mut_slice(),
            self.w_i.as_mut_slice(),
            self.w_g.as_mut_slice(),
            self.w_o.as_mut_slice(),
            self.u_f.as_mut_slice(),
            self.u_i.as_mut_slice(),
            self.u_g.as_mut_slice(),
            self.u_o.as_mut_slice(),
            self.b_f.as_mut_slice(),
            self.b_i.as_mut_slice(),
            self.b_g.as_mut_slice(),
            self.b_o.as_mut_slice(),
        ]
    }
}

/// The nine tensors of one LSTM step: four gates, current cell/hidden state,
/// the previous states, and the input vector.
#[derive(Clone, Debug, PartialEq)]
pub struct CellState {
    pub f: Vec1,
    pub i: Vec1,
    /// Candidate gate (tanh), written c̃ in the usual notation.
    pub g: Vec1,
    pub o: Vec1,
    pub c: Vec1,
    pub h: Vec1,
    pub h_prev: Vec1,
    pub c_prev: Vec1,
    pub x: Vec1,
}

/// One LSTM step:
///   f = σ(W_f x + U_f h₋ + b_f)      i = σ(W_i x + U_i h₋ + b_i)
///   g = tanh(W_g x + U_g h₋ + b_g)   o = σ(W_o x + U_o h₋ + b_o)
///   c = f ⊙ c₋ + i ⊙ g               h = o ⊙ tanh(c)
pub fn lstm_forward(w: &LstmWeights, x: &Vec1, h_prev: &Vec1, c_prev: &Vec1) -> CellState {
    let pre = |wx: &Mat2, uh: &Mat2, b: &Vec1| wx.matvec(x).add(&uh.matvec(h_prev)).add(b);
    let f = sigmoid(&pre(&w.w_f, &w.u_f, &w.b_f));
    let i = sigmoid(&pre(&w.w_i, &w.u_i, &w.b_i));
    let g = tanh(&pre(&w.w_g, &w.u_g, &w.b_g));
    let o = sigmoid(&pre(&w.w_o, &w.u_o, &w.b_o));
    let c = f.hadamard(c_prev).add(&i.hadamard(&g));
    let h = o.hadamard(&tanh(&c));
    CellState {
        f,
        i,
        g,
        o,
        c,
        h,
        h_prev: h_prev.clone(),
        c_prev: c_prev.clone(),
        x: x.clone(),
    }
}

/// Trainable weights of a GRU cell: update gate `z`, reset gate `r`,
/// candidate `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GruWeights {
    pub w_z: Mat2,
    pub w_r: Mat2,
    pub w_n: Mat2,
    pub u_z: Mat2,
    pub u_r: Mat2,
    pub u_n: Mat2,
    pub b_z: Vec1,
    pub b_r: Vec1,
    pub b_n: Vec1,
}

impl GruWeights {
    pub fn zeros(units: usize, inputs: usize) -> Self {
        Self {
            w_z: Mat2::zeros(units, inputs),
            w_r: Mat2::zeros(units, inputs),
            w_n: Mat2::zeros(units, inputs),
            u_z: Mat2::zeros(units, units),
            u_r: Mat2::zeros(units, units),
            u_n: Mat2::zeros(units, units),
            b_z: Vec1::zeros(units),
            b_r: Vec1::zeros(units),
            b_n: Vec1::zeros(units),
        }
    }

    pub fn glorot(units: usize, inputs: usize, rng: &mut Rng) -> Self {
        Self {
            w_z: glorot_init(units, inputs, rng),
            w_r: glorot_init(units, inputs, rng),
            w_n: glorot_init(units, inputs, rng),
            u_z: glorot_init(units, units, rng),
            u_r: glorot_init(units, units, rng),
            u_n: glorot_init(units, units, rng),
            b_z: Vec1::zeros(units),
            b_r: Vec1::zeros(units),
            b_n: Vec1::zeros(units),
        }
    }

    pub fn units(&self) -> usize {
        self.w_z.rows()
    }

    pub const TENSOR_NAMES: [&'static str; 9] = [
        "w_z", "w_r", "w_n", "u_z", "u_r", "u_n", "b_z", "b_r", "b_n",
    ];

    pub fn tensors(&self) -> [&[f64]; 9] {
        [
            self.w_z.as_slice(),
            self.w_r.as_slice(),
            self.w_n.as_slice(),
            self.u_z.as_slice(),
            self.u_r.as_slice(),
            self.u_n.as_slice(),
            self.b_z.as_slice(),
            self.b_r.as_slice(),
            self.b_n.as_slice(),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 9] {
        [
            self.w_z.as_mut_slice(),
            self.w_r.as_mut_slice(),
            self.w_n.as_mut_slice(),
            self.u_z.as_mut_slice(),
            self.u_r.as_mut_slice(),
            self.u_n.as_mut_slice(),
            self.b_z.as_mut_slice(),
            self.b_r.as_mut_slice(),
            self.b_n.as_mut_slice(),
        ]
    }
}

/// GRU step tensors kept for the backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct GruState {
    pub z: Vec1,
    pub r: Vec1,
    pub n: Vec1,
    pub h: Vec1,
    pub h_prev: Vec1,
    pub x: Vec1,
}

/// Standard GRU step:
///   z = σ(W_z x + U_z h₋ + b_z)   r = σ(W_r x + U_r h₋ + b_r)
///   n = tanh(W_n x + U_n (r ⊙ h₋) + b_n)
///   h = z ⊙ h₋ + (1 − z) ⊙ n
pub fn gru_forward(w: &GruWeights, x: &Vec1, h_prev: &Vec1) -> GruState {
    let z = sigmoid(&w.w_z.matvec(x).add(&w.u_z.matvec(h_prev)).add(&w.b_z));
    let r = sigmoid(&w.w_r.matvec(x).add(&w.u_r.matvec(h_prev)).add(&w.b_r));
    let gated = r.hadamard(h_prev);
    let n = tanh(&w.w_n.matvec(x).add(&w.u_n.matvec(&gated)).add(&w.b_n));
    let h = z.hadamard(h_prev).add(&z.map(|v| 1.0 - v).hadamard(&n));
    GruState {
        z,
        r,
        n,
        h,
        h_prev: h_prev.clone(),
        x: x.clone(),
    }
}

/// The six selectable components in repository order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Component {
    Forget = 1,
    Input = 2,
    Candidate = 3,
    Output = 4,
    Cell = 5,
    Hidden = 6,
}

pub const COMPONENTS: [Component; 6] = [
    Component::Forget,
    Component::Input,
    Component::Candidate,
    Component::Output,
    Component::Cell,
    Component::Hidden,
];

impl Component {
    /// 1-based repository index.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Component::Forget => "forget",
            Component::Input => "input",
            Component::Candidate => "candidate",
            Component::Output => "output",
            Component::Cell => "cell",
            Component::Hidden => "hidden",
        }
    }

    pub fn from_index(index: usize) -> Component {
        COMPONENTS[index - 1]
    }

    /// The component's vector within a cell state.
    pub fn extract(self, state: &CellState) -> &Vec1 {
        match self {
            Component::Forget => &state.f,
            Component::Input => &state.i,
            Component::Candidate => &state.g,
            Component::Output => &state.o,
            Component::Cell => &state.c,
            Component::Hidden => &state.h,
        }
    }
}

/// How θ is averaged into per-component importance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMode {
    /// Literal signed average of the trained weights.
    Signed,
    /// Average of |θ|: large negative weights also signal predictive power.
    Absolute,
}

/// How θ is initialized at each trading event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaInit {
    /// θ persists across events; a few iterations per event then suffice.
    Warm,
    /// θ restarts from zeros at every event.
    Zero,
}

impl std::str::FromStr for ImportanceMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signed" => Ok(ImportanceMode::Signed),
            "absolute" => Ok(ImportanceMode::Absolute),
            other => Err(Error::Config(format!(
                "unknown importance mode '{other}' (expected signed or absolute)"
            ))),
        }
    }
}

impl std::str::FromStr for ThetaInit {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "warm" => Ok(ThetaInit::Warm),
            "zero" => Ok(ThetaInit::Zero),
            other => Err(Error::Config(format!(
                "unknown theta initialization '{other}' (expected warm or zero)"
            ))),
        }
    }
}

/// Configuration of the feature-repository selection mechanism.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepoConfig {
    pub alpha: f64,
    pub iters: usize,
    pub theta_init: ThetaInit,
    pub importance_mode: ImportanceMode,
}

impl Default for RepoConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-4,
            iters: 10,
            theta_init: ThetaInit::Warm,
            importance_mode: ImportanceMode::Signed,
        }
    }
}

impl RepoConfig {
    pub fn validate(&self) -> Result<()> {
        // α = 0 is accepted as the degenerate no-learning configuration.
        if self.alpha.is_nan() || self.alpha < 0.0 {
            return Err(Error::Config(format!(
                "repo learning rate must be nonnegative, got {}",
                self.alpha
            )));
        }
        if self.iters < 1 {
            return Err(Error::Config("repo iteration count must be >= 1".into()));
        }
        Ok(())
    }
}

/// Online gradient descent on the squared error of the scalar prediction
/// ŷ = r·θ. Runs exactly `iters` updates of
///   error = ŷ − y,  ∇ = 2·error·rᵀ,  θ ← θ − α·∇.
pub fn online_gd(r: &Vec1, y: f64, theta0: &Vec1, alpha: f64, iters: usize) -> Result<Vec1> {
    assert_eq!(
        r.len(),
        theta0.len(),
        "online_gd: length mismatch ({} vs {})",
        r.len(),
        theta0.len()
    );
    assert!(alpha >= 0.0, "online_gd: alpha must be nonnegative");
    assert!(iters >= 1, "online_gd: iters must be >= 1");

    let mut theta = theta0.clone();
    for iter in 1..=iters {
        let predicted = r.dot(&theta);
        let error = predicted - y;
        if !error.is_finite() {
            return Err(Error::Numeric(format!(
                "online gradient descent diverged at iteration {iter} (error = {error}); \
                 the learning rate is likely too large"
            )));
        }
        let step = 2.0 * alpha * error;
        for (t, rj) in theta.as_mut_slice().iter_mut().zip(r.iter()) {
            *t -= step * rj;
        }
    }
    if !theta.all_finite() {
        return Err(Error::Numeric(format!(
            "online gradient descent produced non-finite weights after {iters} iterations"
        )));
    }
    Ok(theta)
}

/// Average importance per component: the mean of θ over each contiguous
/// U-sized block in repository order (f, i, g, o, c, h).
pub fn average_importance(theta: &Vec1, units: usize, mode: ImportanceMode) -> Vec1 {
    assert_eq!(
        theta.len(),
        6 * units,
        "average_importance: theta length {} is not 6 x {units}",
        theta.len()
    );
    let mut ai = Vec::with_capacity(6);
    for block in 0..6 {
        let slice = &theta.as_slice()[block * units..(block + 1) * units];
        let sum: f64 = match mode {
            ImportanceMode::Signed => slice.iter().sum(),
            ImportanceMode::Absolute => slice.iter().map(|t| t.abs()).sum(),
        };
        ai.push(sum / units as f64);
    }
    Vec1::from_vec(ai)
}

/// Argmax over the six averages; ties go to the lowest component index.
pub fn select_component(ai: &Vec1) -> Component {
    assert_eq!(ai.len(), 6, "select_component: expected 6 averages");
    let mut best = 0;
    for j in 1..6 {
        if ai[j] > ai[best] {
            best = j;
        }
    }
    Component::from_index(best + 1)
}

/// Output of the feature-repository pass for one event.
#[derive(Clone, Debug, PartialEq)]
pub struct RepoResult {
    /// Concatenated repository vector `[f | i | g | o | c | h]`, length 6U.
    pub r: Vec1,
    /// Trained importance weights vector θ.
    pub theta: Vec1,
    /// Per-component average importance, length 6.
    pub ai: Vec1,
    /// Winning component.
    pub selected: Component,
    /// The cell's emitted hidden output: the selected component's vector.
    pub h_new: Vec1,
}

/// One optimum-output LSTM step. Runs the prototype forward pass, fits θ
/// against `y_current` (the already known mid-price of this event), selects
/// the component with the highest average importance, and emits it as the
/// hidden output. The cell state passes through unchanged.
///
/// `theta_carry` is the previous event's θ; it seeds the descent when
/// `cfg.theta_init` is warm.
pub fn optm_forward(
    w: &LstmWeights,
    x: &Vec1,
    h_prev: &Vec1,
    c_prev: &Vec1,
    y_current: f64,
    cfg: &RepoConfig,
    theta_carry: &Vec1,
) -> Result<(CellState, RepoResult)> {
    let units = w.units();
    assert_eq!(
        theta_carry.len(),
        6 * units,
        "optm_forward: theta length {} is not 6 x {units}",
        theta_carry.len()
    );
    let state = lstm_forward(w, x, h_prev, c_prev);
    let r = Vec1::concat(&[&state.f, &state.i, &state.g, &state.o, &state.c, &state.h]);
    let theta0 = match cfg.theta_init {
        ThetaInit::Warm => theta_carry.clone(),
        ThetaInit::Zero => Vec1::zeros(6 * units),
    };
    let theta = online_gd(&r, y_current, &theta0, cfg.alpha, cfg.iters)?;
    let ai = average_importance(&theta, units, cfg.importance_mode);
    let selected = select_component(&ai);
    let h_new = selected.extract(&state).clone();
    Ok((
        state,
        RepoResult {
            r,
            theta,
            ai,
            selected,
            h_new,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use proptest::prelude::*;

    fn random_vec(len: usize, rng: &mut Rng, scale: f64) -> Vec1 {
        Vec1::from_vec((0..len).map(|_| rng.uniform(-scale, scale)).collect())
    }

    #[test]
    fn lstm_forward_zero_weights() {
        let w = LstmWeights::zeros(3, 2);
        let x = Vec1::from_slice(&[1.5, -7.0]);
        let s = lstm_forward(&w, &x, &Vec1::zeros(3), &Vec1::zeros(3));
        for j in 0..3 {
            assert_eq!(s.f[j], 0.5);
            assert_eq!(s.i[j], 0.5);
            assert_eq!(s.o[j], 0.5);
            assert_eq!(s.g[j], 0.0);
            assert_eq!(s.c[j], 0.0);
            assert_eq!(s.h[j], 0.0);
        }
        assert_eq!(s.x, x);
    }

    #[test]
    fn lstm_forward_hand_evaluation() {
        // U=1, zero weights, c_prev=1: c = 0.5·1 + 0.5·0 = 0.5,
        // h = 0.5·tanh(0.5).
        let w = LstmWeights::zeros(1, 1);
        let s = lstm_forward(
            &w,
            &Vec1::from_slice(&[2.0]),
            &Vec1::zeros(1),
            &Vec1::from_slice(&[1.0]),
        );
        assert_eq!(s.c[0], 0.5);
        assert!((s.h[0] - 0.231_058_578_630_004_87).abs() < 1e-15);
    }

    #[test]
    fn lstm_forward_ranges_fuzz() {
        let mut rng = Rng::seeded(17);
        let w = LstmWeights::glorot(4, 40, &mut Rng::seeded(3));
        for _ in 0..1_000 {
            let x = random_vec(40, &mut rng, 2.0);
            let h_prev = random_vec(4, &mut rng, 1.0);
            let c_prev = random_vec(4, &mut rng, 2.0);
            let s = lstm_forward(&w, &x, &h_prev, &c_prev);
            for j in 0..4 {
                assert!(s.f[j] > 0.0 && s.f[j] < 1.0);
                assert!(s.i[j] > 0.0 && s.i[j] < 1.0);
                assert!(s.o[j] > 0.0 && s.o[j] < 1.0);
                assert!(s.g[j] > -1.0 && s.g[j] < 1.0);
                assert!(s.h[j].abs() < 1.0);
            }
        }
    }

    #[test]
    fn gru_forward_zero_weights() {
        let w = GruWeights::zeros(2, 3);
        let s = gru_forward(&w, &Vec1::from_slice(&[1.0, 2.0, 3.0]), &Vec1::zeros(2));
        assert_eq!(s.h.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn gru_update_gate_saturation_keeps_previous_hidden() {
        let mut w = GruWeights::glorot(2, 3, &mut Rng::seeded(5));
        w.b_z = Vec1::filled(2, 40.0); // z ≈ 1
        let h_prev = Vec1::from_slice(&[0.3, -0.6]);
        let s = gru_forward(&w, &Vec1::from_slice(&[1.0, -1.0, 0.5]), &h_prev);
        for j in 0..2 {
            assert!((s.h[j] - h_prev[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn gru_hidden_stays_bounded() {
        let mut rng = Rng::seeded(23);
        let w = GruWeights::glorot(4, 6, &mut Rng::seeded(6));
        let mut h = Vec1::zeros(4);
        for _ in 0..1_000 {
            let x = random_vec(6, &mut rng, 3.0);
            h = gru_forward(&w, &x, &h).h;
            assert!(h.iter().all(|v| v.abs() < 1.0));
        }
    }

    #[test]
    fn online_gd_hand_trace() {
        // r=(1), y=2, θ₀=(0), α=0.25.
        // iter 1: ŷ=0, err=−2, ∇=−4, θ=1. iter 2: ŷ=1, err=−1, ∇=−2, θ=1.5.
        let r = Vec1::from_slice(&[1.0]);
        let after1 = online_gd(&r, 2.0, &Vec1::zeros(1), 0.25, 1).unwrap();
        assert_eq!(after1[0], 1.0);
        let after2 = online_gd(&r, 2.0, &Vec1::zeros(1), 0.25, 2).unwrap();
        assert_eq!(after2[0], 1.5);
    }

    #[test]
    fn online_gd_fixed_point() {
        let mut rng = Rng::seeded(31);
        let r = random_vec(8, &mut rng, 2.0);
        let theta0 = random_vec(8, &mut rng, 1.0);
        let y = r.dot(&theta0);
        let theta = online_gd(&r, y, &theta0, 0.7, 25).unwrap();
        assert_eq!(theta, theta0);
    }

    #[test]
    fn online_gd_matches_least_squares_oracle() {
        // Oracle first: for a single observation the normal equations
        // (r rᵀ)β = rᵀy have the min-norm solution θ* = rᵀ·y/‖r‖², whose
        // prediction is exactly y.
        let mut rng = Rng::seeded(47);
        for _ in 0..100 {
            let r = random_vec(24, &mut rng, 3.0);
            let y = rng.uniform(-10.0, 10.0);
            let oracle_theta = r.scale(y / r.norm_sq());
            let oracle_prediction = r.dot(&oracle_theta);

            let alpha = 0.4 / r.norm_sq();
            let theta = online_gd(&r, y, &Vec1::zeros(24), alpha, 1000).unwrap();
            let prediction = r.dot(&theta);
            assert!((prediction - y).abs() < 1e-8);
            assert!((prediction - oracle_prediction).abs() < 1e-6);
        }
    }

    #[test]
    fn online_gd_error_non_increasing_for_stable_rate() {
        // error' = error·(1 − 2α‖r‖²), so |error| cannot grow when
        // α ≤ 1/‖r‖².
        let mut rng = Rng::seeded(53);
        for _ in 0..1_000 {
            let len = rng.range_i64(1, 30) as usize;
            let r = random_vec(len, &mut rng, 2.0);
            let y = rng.uniform(-5.0, 5.0);
            let alpha = rng.uniform(0.0, 1.0) / r.norm_sq();
            let mut theta = random_vec(len, &mut rng, 1.0);
            let mut prev_error = (r.dot(&theta) - y).abs();
            for _ in 0..10 {
                theta = online_gd(&r, y, &theta, alpha, 1).unwrap();
                let error = (r.dot(&theta) - y).abs();
                assert!(error <= prev_error + 1e-12);
                prev_error = error;
            }
        }
    }

    #[test]
    fn online_gd_reports_divergence_iteration() {
        let r = Vec1::from_slice(&[10.0, 10.0]);
        // α·2‖r‖² ≫ 1: geometric blow-up to overflow.
        let err = online_gd(&r, 1.0, &Vec1::zeros(2), 10.0, 500).unwrap_err();
        assert!(err.to_string().contains("iteration"), "{err}");
    }

    #[test]
    fn average_importance_u1_is_identity() {
        let theta = Vec1::from_slice(&[0.1, -0.2, 0.3, 0.4, -0.5, 0.6]);
        let ai = average_importance(&theta, 1, ImportanceMode::Signed);
        assert_eq!(ai, theta);
    }

    #[test]
    fn average_importance_hand_case() {
        let theta =
            Vec1::from_slice(&[1.0, 3.0, 2.0, 2.0, 0.0, 0.0, 5.0, 1.0, -1.0, -1.0, 4.0, 4.0]);
        let ai = average_importance(&theta, 2, ImportanceMode::Signed);
        assert_eq!(ai.as_slice(), &[2.0, 2.0, 0.0, 3.0, -1.0, 4.0]);
        assert_eq!(select_component(&ai), Component::Hidden);
    }

    #[test]
    fn average_importance_scales_linearly() {
        let mut rng = Rng::seeded(61);
        let theta = random_vec(24, &mut rng, 2.0);
        let ai = average_importance(&theta, 4, ImportanceMode::Signed);
        let scaled = average_importance(&theta.scale(3.5), 4, ImportanceMode::Signed);
        for j in 0..6 {
            assert!((scaled[j] - 3.5 * ai[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn absolute_mode_counts_negative_mass() {
        let theta = Vec1::from_slice(&[-9.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let signed = average_importance(&theta, 1, ImportanceMode::Signed);
        let absolute = average_importance(&theta, 1, ImportanceMode::Absolute);
        assert_eq!(select_component(&signed), Component::Hidden);
        assert_eq!(select_component(&absolute), Component::Forget);
    }

    #[test]
    fn selection_matches_naive_recomputation() {
        // Independent oracle: naive per-block mean plus first-max argmax.
        fn naive(theta: &[f64], units: usize) -> (Vec<f64>, usize) {
            let mut ai = vec![0.0; 6];
            for block in 0..6 {
                let mut sum = 0.0;
                for j in 0..units {
                    sum += theta[block * units + j];
                }
                ai[block] = sum / units as f64;
            }
            let mut best = 0;
            for j in 1..6 {
                if ai[j] > ai[best] {
                    best = j;
                }
            }
            (ai, best + 1)
        }

        let mut rng = Rng::seeded(71);
        for units in [1usize, 2, 4, 8] {
            for _ in 0..1_000 {
                let theta = random_vec(6 * units, &mut rng, 5.0);
                let ai = average_importance(&theta, units, ImportanceMode::Signed);
                let selected = select_component(&ai);
                let (expected_ai, expected_index) = naive(theta.as_slice(), units);
                assert_eq!(ai.as_slice(), expected_ai.as_slice());
                assert_eq!(selected.index(), expected_index);
            }
        }
    }

    #[test]
    fn optm_forward_no_learning_ties_to_forget_gate() {
        // iters=1 with α=0 keeps θ at zero: all averages tie at 0 and the
        // tie-break picks the forget gate.
        let cfg = RepoConfig {
            alpha: 0.0,
            iters: 1,
            theta_init: ThetaInit::Zero,
            ..RepoConfig::default()
        };
        let w = LstmWeights::glorot(3, 5, &mut Rng::seeded(5));
        let mut rng = Rng::seeded(77);
        let x = random_vec(5, &mut rng, 1.0);
        let h_prev = random_vec(3, &mut rng, 0.5);
        let c_prev = random_vec(3, &mut rng, 0.5);
        let (state, repo) =
            optm_forward(&w, &x, &h_prev, &c_prev, 2.0, &cfg, &Vec1::zeros(18)).unwrap();
        assert_eq!(repo.ai.as_slice(), &[0.0; 6]);
        assert_eq!(repo.selected, Component::Forget);
        assert_eq!(repo.h_new, state.f);
    }

    #[test]
    fn optm_forward_output_is_a_stored_component_and_cell_passes_through() {
        let cfg = RepoConfig::default();
        let w = LstmWeights::glorot(4, 6, &mut Rng::seeded(9));
        let mut rng = Rng::seeded(83);
        let mut h = Vec1::zeros(4);
        let mut c = Vec1::zeros(4);
        let mut theta = Vec1::zeros(24);
        for _ in 0..200 {
            let x = random_vec(6, &mut rng, 1.0);
            let y = rng.uniform(-1.0, 1.0);
            let (state, repo) = optm_forward(&w, &x, &h, &c, y, &cfg, &theta).unwrap();
            let reference = lstm_forward(&w, &x, &h, &c);
            assert_eq!(state.c, reference.c);
            let is_stored = COMPONENTS
                .iter()
                .any(|&component| repo.h_new == *component.extract(&state));
            assert!(is_stored);
            h = repo.h_new.clone();
            c = state.c.clone();
            theta = repo.theta.clone();
        }
    }

    #[test]
    fn repo_vector_blocks_reproduce_components() {
        let w = LstmWeights::glorot(3, 4, &mut Rng::seeded(13));
        let mut rng = Rng::seeded(89);
        let x = random_vec(4, &mut rng, 1.0);
        let h_prev = random_vec(3, &mut rng, 0.5);
        let c_prev = random_vec(3, &mut rng, 0.5);
        let (state, repo) = optm_forward(
            &w,
            &x,
            &h_prev,
            &c_prev,
            0.5,
            &RepoConfig::default(),
            &Vec1::zeros(18),
        )
        .unwrap();
        for (block, component) in COMPONENTS.iter().enumerate() {
            let slice = &repo.r.as_slice()[block * 3..(block + 1) * 3];
            assert_eq!(slice, component.extract(&state).as_slice());
        }
    }

    #[test]
    fn optm_selects_the_predictive_cell_state() {
        // U=1 stream engineered so the cell state alone tracks the label:
        // f is a fixed leak (b_f=0 → 0.5), i ≈ 1, g follows the input, and
        // the label is defined as the resulting c exactly. The other
        // components are either constant (f, i, o) or imperfect correlates
        // (g sees only the current input, h = 0.5·tanh(c) bends for |c|>1).
        let mut w = LstmWeights::zeros(1, 1);
        w.b_i = Vec1::filled(1, 30.0);
        w.w_g = Mat2::from_rows(&[&[1.0]]);

        let cfg = RepoConfig {
            alpha: 0.05,
            iters: 10,
            ..RepoConfig::default()
        };
        let mut rng = Rng::seeded(97);
        let mut h = Vec1::zeros(1);
        let mut c = Vec1::zeros(1);
        let mut theta = Vec1::zeros(6);
        let mut c_val = 0.0_f64;
        for event in 0..400 {
            let x = rng.uniform(-2.0, 2.0);
            c_val = 0.5 * c_val + crate::numerics::sigmoid_scalar(30.0) * x.tanh();
            let y = c_val; // the label is the cell state itself
            let (state, repo) =
                optm_forward(&w, &Vec1::from_slice(&[x]), &h, &c, y, &cfg, &theta).unwrap();
            assert!((state.c[0] - c_val).abs() < 1e-12);
            if event >= 350 {
                assert_eq!(
                    repo.selected,
                    Component::Cell,
                    "event {event}: ai={:?}",
                    repo.ai
                );
            }
            h = repo.h_new.clone();
            c = state.c.clone();
            theta = repo.theta.clone();
        }
    }

    proptest! {
        #[test]
        fn selection_invariant_under_positive_rescale(seed in 0u64..200, k in 1e-3f64..1e3) {
            let mut rng = Rng::seeded(seed);
            let theta = random_vec(12, &mut rng, 4.0);
            let base = select_component(&average_importance(&theta, 2, ImportanceMode::Signed));
            let scaled = select_component(&average_importance(&theta.scale(k), 2, ImportanceMode::Signed));
            prop_assert_eq!(base, scaled);
        }

        #[test]
        fn selection_invariant_under_increasing_transform(seed in 0u64..200) {
            let mut rng = Rng::seeded(seed);
            let theta = random_vec(24, &mut rng, 4.0);
            let ai = average_importance(&theta, 4, ImportanceMode::Signed);
            let transformed = ai.map(|v| v.exp() + 3.0 * v);
            prop_assert_eq!(select_component(&ai), select_component(&transformed));
        }
    }
}
