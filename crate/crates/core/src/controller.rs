//! Fixed-reservoir neural controller and its genotype codec.
//!
//! The network has 9 inputs, two fixed random 9x9 hidden layers and an
//! evolvable 2x9 output layer. Only the output layer is encoded in the
//! genotype; every robot in a swarm shares one controller instance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::sim::SensorVector;

pub const INPUT_DIM: usize = 9;
pub const HIDDEN_DIM: usize = 9;
pub const OUTPUT_DIM: usize = 2;
pub const GENOTYPE_LEN: usize = OUTPUT_DIM * HIDDEN_DIM;
pub const GENE_BOUND: f64 = 10.0;
pub const RESERVOIR_WEIGHT_BOUND: f64 = 2.0;

/// Hidden-layer activation. The prose description and the printed
/// formula of the source architecture disagree, so both are supported;
/// softplus is the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Softplus,
    Relu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            // stable softplus: ln(1 + e^x) without overflow
            Activation::Softplus => x.max(0.0) + (-x.abs()).exp().ln_1p(),
            Activation::Relu => x.max(0.0),
        }
    }
}

/// How the tanh output of the forward-velocity channel maps onto the
/// required `[-1, 0]` range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VMapping {
    /// `v = (tanh - 1) / 2`; a zero output layer yields half speed.
    #[default]
    Affine,
    /// `v = min(tanh, 0)`.
    Clamp,
}

impl VMapping {
    pub fn apply(self, t: f64) -> f64 {
        match self {
            VMapping::Affine => (t - 1.0) / 2.0,
            VMapping::Clamp => t.min(0.0),
        }
    }
}

/// The 18 evolvable output weights, each in `[-10, 10]`. Row 1 of the
/// output matrix comes first, then row 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Genotype(Vec<f64>);

impl Genotype {
    pub fn new(genes: Vec<f64>) -> Result<Self> {
        if genes.len() != GENOTYPE_LEN {
            return Err(Error::GenotypeLength {
                expected: GENOTYPE_LEN,
                actual: genes.len(),
            });
        }
        for (index, &value) in genes.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFinite("gene"));
            }
            if value < -GENE_BOUND || value > GENE_BOUND {
                return Err(Error::GeneOutOfBounds {
                    index,
                    value,
                    lo: -GENE_BOUND,
                    hi: GENE_BOUND,
                });
            }
        }
        Ok(Genotype(genes))
    }

    /// As `new` but clamps out-of-range genes instead of rejecting them;
    /// variation operators use this to apply the bound handling rule.
    pub fn clamped(mut genes: Vec<f64>) -> Result<Self> {
        if genes.len() != GENOTYPE_LEN {
            return Err(Error::GenotypeLength {
                expected: GENOTYPE_LEN,
                actual: genes.len(),
            });
        }
        for g in &mut genes {
            if !g.is_finite() {
                return Err(Error::NonFinite("gene"));
            }
            *g = g.clamp(-GENE_BOUND, GENE_BOUND);
        }
        Ok(Genotype(genes))
    }

    /// Uniform random genotype in `[-10, 10]^18`.
    pub fn random(stream: &mut Stream) -> Self {
        Genotype(
            (0..GENOTYPE_LEN)
                .map(|_| stream.range_f64(-GENE_BOUND, GENE_BOUND))
                .collect(),
        )
    }

    pub fn genes(&self) -> &[f64] {
        &self.0
    }

    /// One genotype per line: 18 decimal values, shortest round-trip
    /// precision, space separated.
    pub fn to_line(&self) -> String {
        self.0
            .iter()
            .map(|g| format!("{g}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn from_line(line: &str) -> Result<Self> {
        let genes: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::invalid(format!("bad genotype value: {e}")))?;
        Genotype::new(genes)
    }
}

impl TryFrom<Vec<f64>> for Genotype {
    type Error = Error;
    fn try_from(genes: Vec<f64>) -> Result<Self> {
        Genotype::new(genes)
    }
}

impl From<Genotype> for Vec<f64> {
    fn from(g: Genotype) -> Vec<f64> {
        g.0
    }
}

pub type WOut = [[f64; HIDDEN_DIM]; OUTPUT_DIM];

/// Splits the genotype into the two output rows.
pub fn decode(genotype: &Genotype) -> WOut {
    let genes = genotype.genes();
    let mut w_out = [[0.0; HIDDEN_DIM]; OUTPUT_DIM];
    for row in 0..OUTPUT_DIM {
        w_out[row].copy_from_slice(&genes[row * HIDDEN_DIM..(row + 1) * HIDDEN_DIM]);
    }
    w_out
}

/// Inverse of [`decode`].
pub fn encode(w_out: &WOut) -> Genotype {
    let mut genes = Vec::with_capacity(GENOTYPE_LEN);
    for row in w_out {
        genes.extend_from_slice(row);
    }
    Genotype(genes)
}

/// The fixed random hidden weights. Regeneration from the same seed is
/// bit-identical: ChaCha8 output mapped with a fixed 53-bit conversion,
/// filled row-major, first layer then second, all biases zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirWeights {
    seed: u64,
    w_h1: [[f64; INPUT_DIM]; HIDDEN_DIM],
    w_h2: [[f64; HIDDEN_DIM]; HIDDEN_DIM],
}

impl ReservoirWeights {
    pub fn generate(seed: u64) -> Self {
        let mut stream = Stream::new(seed);
        let mut w_h1 = [[0.0; INPUT_DIM]; HIDDEN_DIM];
        for row in &mut w_h1 {
            for w in row.iter_mut() {
                *w = stream.range_f64(-RESERVOIR_WEIGHT_BOUND, RESERVOIR_WEIGHT_BOUND);
            }
        }
        let mut w_h2 = [[0.0; HIDDEN_DIM]; HIDDEN_DIM];
        for row in &mut w_h2 {
            for w in row.iter_mut() {
                *w = stream.range_f64(-RESERVOIR_WEIGHT_BOUND, RESERVOIR_WEIGHT_BOUND);
            }
        }
        ReservoirWeights { seed, w_h1, w_h2 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn w_h1(&self) -> &[[f64; INPUT_DIM]; HIDDEN_DIM] {
        &self.w_h1
    }

    pub fn w_h2(&self) -> &[[f64; HIDDEN_DIM]; HIDDEN_DIM] {
        &self.w_h2
    }
}

/// Controller output: `w` steers in `[-1, 1]`, `v` drives forward in
/// `[-1, 0]` (0 is stop, -1 full speed).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerOutput {
    pub w: f64,
    pub v: f64,
}

/// Everything that pins a controller for hashing and replay.
#[derive(Debug, Clone, Serialize)]
pub struct ControllerDescriptor {
    pub reservoir_seed: u64,
    pub activation: Activation,
    pub v_mapping: VMapping,
    pub genes: Vec<f64>,
}

/// A complete controller: shared fixed reservoir plus one decoded
/// output layer. Forward passes are pure and hold no state between
/// control steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirController {
    weights: ReservoirWeights,
    w_out: WOut,
    genotype: Genotype,
    activation: Activation,
    v_mapping: VMapping,
}

impl ReservoirController {
    pub fn new(
        weights: ReservoirWeights,
        genotype: Genotype,
        activation: Activation,
        v_mapping: VMapping,
    ) -> Self {
        let w_out = decode(&genotype);
        ReservoirController {
            weights,
            w_out,
            genotype,
            activation,
            v_mapping,
        }
    }

    pub fn genotype(&self) -> &Genotype {
        &self.genotype
    }

    pub fn reservoir(&self) -> &ReservoirWeights {
        &self.weights
    }

    pub fn descriptor(&self) -> ControllerDescriptor {
        ControllerDescriptor {
            reservoir_seed: self.weights.seed,
            activation: self.activation,
            v_mapping: self.v_mapping,
            genes: self.genotype.genes().to_vec(),
        }
    }

    pub fn forward(&self, input: &SensorVector) -> ControllerOutput {
        forward(
            &self.weights,
            &self.w_out,
            &input.channels,
            self.activation,
            self.v_mapping,
        )
    }
}

/// One forward pass: two fixed hidden layers, tanh output, then the
/// v-channel range map.
pub fn forward(
    weights: &ReservoirWeights,
    w_out: &WOut,
    input: &[f64; INPUT_DIM],
    activation: Activation,
    v_mapping: VMapping,
) -> ControllerOutput {
    let mut h1 = [0.0; HIDDEN_DIM];
    for (j, row) in weights.w_h1.iter().enumerate() {
        let mut sum = 0.0;
        for (k, w) in row.iter().enumerate() {
            sum += w * input[k];
        }
        h1[j] = activation.apply(sum);
    }
    let mut h2 = [0.0; HIDDEN_DIM];
    for (j, row) in weights.w_h2.iter().enumerate() {
        let mut sum = 0.0;
        for (k, w) in row.iter().enumerate() {
            sum += w * h1[k];
        }
        h2[j] = activation.apply(sum);
    }
    let mut out = [0.0; OUTPUT_DIM];
    for (j, row) in w_out.iter().enumerate() {
        let mut sum = 0.0;
        for (k, w) in row.iter().enumerate() {
            sum += w * h2[k];
        }
        out[j] = sum.tanh();
    }
    ControllerOutput {
        w: out[0],
        v: v_mapping.apply(out[1]),
    }
}
