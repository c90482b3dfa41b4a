use serde::{Deserialize, Serialize};

use super::tape::{Mat, Tape, Var};
use crate::error::{Error, Result};
use crate::foundation::{NeuralConfig, RandomStream};
use crate::physiology::PMF_LEN;

pub const NIR_INPUTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    OriginalPinn,
    OptimizedPinn,
    FullRtePinn,
    SelectiveRtePinn,
    Sdnn,
}

impl Architecture {
    pub const ALL: [Architecture; 5] = [
        Architecture::OriginalPinn,
        Architecture::OptimizedPinn,
        Architecture::FullRtePinn,
        Architecture::SelectiveRtePinn,
        Architecture::Sdnn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::OriginalPinn => "original_pinn",
            Architecture::OptimizedPinn => "optimized_pinn",
            Architecture::FullRtePinn => "full_rte_pinn",
            Architecture::SelectiveRtePinn => "selective_rte_pinn",
            Architecture::Sdnn => "sdnn",
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown architecture `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhysicsLoss {
    BeerLambert,
    Rte,
    Conservation,
}

/// Layer widths and physics configuration of one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub architecture: Architecture,
    /// Widths of the NIR branch including its input; empty for the single-stack network.
    pub nir_widths: Vec<usize>,
    pub pmf_widths: Vec<usize>,
    /// Head (or whole stack) widths including input and output.
    pub head_widths: Vec<usize>,
    pub use_residual: bool,
    pub use_attention: bool,
    pub physics: Vec<PhysicsLoss>,
    pub lambda_physics: f64,
    pub rte_wavelengths: Vec<u32>,
}

impl NetworkSpec {
    pub fn new(architecture: Architecture, cfg: &NeuralConfig, wavelengths: &[u32]) -> Self {
        let pinn = |physics: Vec<PhysicsLoss>, rte: Vec<u32>, optimized: bool| NetworkSpec {
            architecture,
            nir_widths: vec![NIR_INPUTS, 32, 64, 32],
            pmf_widths: vec![PMF_LEN, 16, 32, 16],
            head_widths: vec![48, 128, 64, 1],
            use_residual: optimized,
            use_attention: optimized,
            physics,
            lambda_physics: cfg.lambda_physics,
            rte_wavelengths: rte,
        };
        match architecture {
            Architecture::OriginalPinn => pinn(vec![PhysicsLoss::BeerLambert], vec![], false),
            Architecture::OptimizedPinn => {
                let mut physics = vec![PhysicsLoss::BeerLambert];
                if cfg.conservation {
                    physics.push(PhysicsLoss::Conservation);
                }
                pinn(physics, vec![], true)
            }
            Architecture::FullRtePinn => pinn(vec![PhysicsLoss::Rte], wavelengths.to_vec(), false),
            Architecture::SelectiveRtePinn => pinn(
                vec![PhysicsLoss::Rte],
                cfg.selective_wavelengths.clone(),
                false,
            ),
            Architecture::Sdnn => NetworkSpec {
                architecture,
                nir_widths: vec![],
                pmf_widths: vec![],
                head_widths: vec![NIR_INPUTS + PMF_LEN, 16, 64, 64, 32, 1],
                use_residual: false,
                use_attention: false,
                physics: vec![],
                lambda_physics: 0.0,
                rte_wavelengths: vec![],
            },
        }
    }

    pub fn is_dual_branch(&self) -> bool {
        !self.nir_widths.is_empty()
    }

    /// Weight matrices in parameter order as `(fan_in, fan_out)`.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::new();
        if self.use_attention {
            dims.push((NIR_INPUTS, NIR_INPUTS));
        }
        for widths in [&self.nir_widths, &self.pmf_widths, &self.head_widths] {
            dims.extend(widths.windows(2).map(|w| (w[0], w[1])));
        }
        dims
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Parameter(format!("{}: {m}", self.architecture)));
        if self.head_widths.len() < 2 || self.head_widths.last() != Some(&1) {
            return bad("head must end in a single output");
        }
        if self.is_dual_branch() {
            if self.nir_widths.first() != Some(&NIR_INPUTS) || self.pmf_widths.first() != Some(&PMF_LEN) {
                return bad("branch inputs must be 4 NIR and 12 PMF entries");
            }
            let joined = self.nir_widths.last().unwrap() + self.pmf_widths.last().copied().unwrap_or(0);
            if self.head_widths[0] != joined {
                return bad("head input must equal the concatenated branch widths");
            }
            if self.use_residual && (self.nir_widths.len() != 4 || self.pmf_widths.len() != 4) {
                return bad("residual branches need exactly three layers");
            }
            if self.use_residual && (self.nir_widths[1] != self.nir_widths[3] || self.pmf_widths[1] != self.pmf_widths[3]) {
                return bad("residual blocks need equal input and output widths");
            }
        } else if self.head_widths[0] != NIR_INPUTS + PMF_LEN || self.use_attention || self.use_residual {
            return bad("single-stack network takes the 16 concatenated inputs without attention or residuals");
        }
        if !(self.lambda_physics >= 0.0) {
            return bad("λ_physics must be non-negative");
        }
        Ok(())
    }
}

/// Exact number of trainable scalars.
pub fn count_params(spec: &NetworkSpec) -> usize {
    spec.layer_dims().iter().map(|(i, o)| (i + 1) * o).sum()
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    offset: usize,
    fan_in: usize,
    fan_out: usize,
}

impl Layer {
    fn bias_offset(&self) -> usize {
        self.offset + self.fan_in * self.fan_out
    }
}

/// A network: spec plus flat parameter vector. Each layer stores its `fan_in × fan_out`
/// weights row-major followed by its bias, and computes `h W + b` on row-batched inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub spec: NetworkSpec,
    pub params: Vec<f64>,
}

impl Network {
    /// Glorot-uniform weights, zero biases.
    pub fn init(spec: NetworkSpec, rng: &mut RandomStream) -> Result<Self> {
        spec.validate()?;
        let mut params = Vec::with_capacity(count_params(&spec));
        for (fan_in, fan_out) in spec.layer_dims() {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.uniform(-limit, limit)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(Self { spec, params })
    }

    pub fn with_params(spec: NetworkSpec, params: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if params.len() != count_params(&spec) {
            return Err(Error::Dimension(format!(
                "{} needs {} parameters, got {}",
                spec.architecture,
                count_params(&spec),
                params.len()
            )));
        }
        Ok(Self { spec, params })
    }

    fn layers(&self) -> Vec<Layer> {
        let mut offset = 0;
        self.spec
            .layer_dims()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let l = Layer { offset, fan_in, fan_out };
                offset += (fan_in + 1) * fan_out;
                l
            })
            .collect()
    }

    fn dense(&self, t: &mut Tape, params: &[f64], l: Layer, x: Var) -> Var {
        let w = t.param(params, l.offset, l.fan_in, l.fan_out);
        let b = t.param(params, l.bias_offset(), 1, l.fan_out);
        let h = t.matmul(x, w);
        t.add_bias(h, b)
    }

    /// Three-layer branch, either a plain ReLU stack or `h₁ + F(h₁)` with
    /// `F(h) = W₃ ReLU(W₂ h + b₂) + b₃`.
    fn branch(&self, t: &mut Tape, params: &[f64], layers: &[Layer], x: Var) -> Var {
        let z = self.dense(t, params, layers[0], x);
        let mut h = t.relu(z);
        if self.spec.use_residual {
            let z = self.dense(t, params, layers[1], h);
            let a = t.relu(z);
            let f = self.dense(t, params, layers[2], a);
            return t.add(h, f);
        }
        for l in &layers[1..] {
            let z = self.dense(t, params, *l, h);
            h = t.relu(z);
        }
        h
    }

    /// Records the forward pass on `t` and returns the `n × 1` raw output node, plus the
    /// NIR/PMF branch outputs for dual-branch networks.
    pub(crate) fn forward_parts(
        &self,
        t: &mut Tape,
        params: &[f64],
        nir: &Mat,
        pmf: &Mat,
    ) -> Result<(Var, Option<(Var, Var)>)> {
        if nir.ncols() != NIR_INPUTS || pmf.ncols() != PMF_LEN || nir.nrows() != pmf.nrows() {
            return Err(Error::Dimension(format!(
                "expected n×{NIR_INPUTS} NIR and n×{PMF_LEN} PMF inputs, got {}×{} and {}×{}",
                nir.nrows(),
                nir.ncols(),
                pmf.nrows(),
                pmf.ncols()
            )));
        }
        let layers = self.layers();
        let mut next = 0;
        let mut x_nir = t.constant(nir.clone());
        let x_pmf = t.constant(pmf.clone());
        if self.spec.use_attention {
            let e = self.dense(t, params, layers[0], x_nir);
            let alpha = t.softmax_rows(e);
            x_nir = t.mul(alpha, x_nir);
            next = 1;
        }
        let (mut h, branches) = if self.spec.is_dual_branch() {
            let n_nir = self.spec.nir_widths.len() - 1;
            let n_pmf = self.spec.pmf_widths.len() - 1;
            let a = self.branch(t, params, &layers[next..next + n_nir], x_nir);
            next += n_nir;
            let b = self.branch(t, params, &layers[next..next + n_pmf], x_pmf);
            next += n_pmf;
            (t.concat_cols(a, b), Some((a, b)))
        } else {
            (t.concat_cols(x_nir, x_pmf), None)
        };
        let head = &layers[next..];
        for (k, l) in head.iter().enumerate() {
            h = self.dense(t, params, *l, h);
            if k + 1 < head.len() {
                h = t.relu(h);
            }
        }
        Ok((h, branches))
    }

    pub(crate) fn forward_tape(&self, t: &mut Tape, params: &[f64], nir: &Mat, pmf: &Mat) -> Result<Var> {
        Ok(self.forward_parts(t, params, nir, pmf)?.0)
    }

    /// Raw network output for each row of the inputs.
    pub fn forward(&self, nir: &Mat, pmf: &Mat) -> Result<Vec<f64>> {
        let mut t = Tape::new();
        let out = self.forward_tape(&mut t, &self.params, nir, pmf)?;
        Ok(t.value(out).iter().copied().collect())
    }

    /// Attention weights per row; `None` without attention.
    pub fn attention(&self, nir: &Mat) -> Option<Mat> {
        if !self.spec.use_attention {
            return None;
        }
        let l = self.layers()[0];
        let mut t = Tape::new();
        let x = t.constant(nir.clone());
        let e = self.dense(&mut t, &self.params, l, x);
        let a = t.softmax_rows(e);
        Some(t.value(a).clone())
    }
}
