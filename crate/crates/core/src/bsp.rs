//! BSP-style shape decoder: a dense network maps a latent code plus a
//! one-hot category to plane parameters, and a fixed binary membership
//! matrix groups planes into convexes. A shape is the union of its convexes.

use std::path::Path;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::canonical::CanonicalFrame;
use crate::error::{Error, Result};
use crate::io::container::{self, BlockReader};
use crate::mesh::TriMesh;
use crate::polytope::{ConvexPolytope, Plane};

pub const DECODER_FORMAT: &str = "srk-bsp-decoder";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "identity" => Some(Activation::Identity),
            "relu" => Some(Activation::Relu),
            "sigmoid" => Some(Activation::Sigmoid),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
        }
    }
}

/// Dense affine layer, weights `outputs x inputs` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
    pub activation: Activation,
}

impl DenseLayer {
    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| {
                let acc = row
                    .iter()
                    .zip(x)
                    .fold(*b as f64, |acc, (w, v)| acc + *w as f64 * v);
                self.activation.apply(acc)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BspDecoder {
    latent_dim: usize,
    categories: Vec<String>,
    layers: Vec<DenseLayer>,
    num_planes: usize,
    num_convexes: usize,
    /// `num_planes x num_convexes`, row-major.
    membership: Vec<bool>,
    frame: CanonicalFrame,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerHeader {
    weight_shape: [usize; 2],
    bias_len: usize,
    activation: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct DecoderHeader {
    format: String,
    version: u32,
    latent_dim: usize,
    categories: Vec<String>,
    num_planes: usize,
    num_convexes: usize,
    canonical_frame: CanonicalFrame,
    layers: Vec<LayerHeader>,
}

impl BspDecoder {
    pub fn new(
        latent_dim: usize,
        categories: Vec<String>,
        layers: Vec<DenseLayer>,
        num_planes: usize,
        num_convexes: usize,
        membership: Vec<bool>,
        frame: CanonicalFrame,
    ) -> Result<Self> {
        let dec = BspDecoder {
            latent_dim,
            categories,
            layers,
            num_planes,
            num_convexes,
            membership,
            frame,
        };
        dec.validate().map_err(|reason| Error::load("decoder", reason))?;
        Ok(dec)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.layers.is_empty() {
            return Err("decoder has no layers".into());
        }
        if self.categories.is_empty() {
            return Err("decoder declares no categories".into());
        }
        let mut width = self.latent_dim + self.categories.len();
        for (i, l) in self.layers.iter().enumerate() {
            if l.inputs != width {
                return Err(format!("layer {i}: expects {} inputs but receives {width}", l.inputs));
            }
            if l.weights.len() != l.inputs * l.outputs {
                return Err(format!(
                    "layer {i}: weight matrix has {} values, expected {}x{}",
                    l.weights.len(),
                    l.outputs,
                    l.inputs
                ));
            }
            if l.bias.len() != l.outputs {
                return Err(format!(
                    "layer {i}: bias length {} does not match {} outputs",
                    l.bias.len(),
                    l.outputs
                ));
            }
            width = l.outputs;
        }
        if width != 4 * self.num_planes {
            return Err(format!(
                "final layer produces {width} values, expected 4 x {} planes",
                self.num_planes
            ));
        }
        if self.membership.len() != self.num_planes * self.num_convexes {
            return Err("membership matrix size mismatch".into());
        }
        for c in 0..self.num_convexes {
            let members = (0..self.num_planes)
                .filter(|&p| self.membership[p * self.num_convexes + c])
                .count();
            if members < 4 {
                return Err(format!("convex {c} has {members} member planes, needs at least 4"));
            }
        }
        Ok(())
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn category_index(&self, name: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == name)
    }

    pub fn num_planes(&self) -> usize {
        self.num_planes
    }

    pub fn num_convexes(&self) -> usize {
        self.num_convexes
    }

    pub fn frame(&self) -> CanonicalFrame {
        self.frame
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn membership(&self) -> &[bool] {
        &self.membership
    }

    /// Raw network output for `z` conditioned on category index `category`.
    pub fn forward(&self, z: &[f64], category: usize) -> Result<Vec<f64>> {
        if z.len() != self.latent_dim {
            return Err(Error::invalid(format!(
                "latent code has dimension {}, decoder expects {}",
                z.len(),
                self.latent_dim
            )));
        }
        if category >= self.categories.len() {
            return Err(Error::invalid(format!("category index {category} out of range")));
        }
        let mut x = Vec::with_capacity(self.latent_dim + self.categories.len());
        x.extend_from_slice(z);
        x.extend((0..self.categories.len()).map(|c| if c == category { 1.0 } else { 0.0 }));
        for layer in &self.layers {
            x = layer.forward(&x);
        }
        Ok(x)
    }

    pub fn decode_planes(&self, z: &[f64], category: usize) -> Result<PlaneSet> {
        let out = self.forward(z, category)?;
        let planes: Vec<Plane> = out
            .chunks_exact(4)
            .map(|c| [c[0], c[1], c[2], c[3]])
            .collect();
        PlaneSet::new(planes, self.num_convexes, &self.membership, self.frame)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = DecoderHeader {
            format: DECODER_FORMAT.into(),
            version: 1,
            latent_dim: self.latent_dim,
            categories: self.categories.clone(),
            num_planes: self.num_planes,
            num_convexes: self.num_convexes,
            canonical_frame: self.frame,
            layers: self
                .layers
                .iter()
                .map(|l| LayerHeader {
                    weight_shape: [l.outputs, l.inputs],
                    bias_len: l.bias.len(),
                    activation: l.activation.name().into(),
                })
                .collect(),
        };
        let mut payload = Vec::new();
        for l in &self.layers {
            container::push_f32s(&mut payload, l.weights.iter().copied());
            container::push_f32s(&mut payload, l.bias.iter().copied());
        }
        container::push_f32s(&mut payload, self.membership.iter().map(|&m| if m { 1.0 } else { 0.0 }));
        container::encode(&header, &payload)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (h, payload): (DecoderHeader, _) = container::decode("decoder", bytes)?;
        if h.format != DECODER_FORMAT {
            return Err(Error::load("decoder", format!("unexpected format '{}'", h.format)));
        }
        if h.version != 1 {
            return Err(Error::load("decoder", format!("unsupported version {}", h.version)));
        }
        let mut reader = BlockReader::new("decoder", payload);
        let mut layers = Vec::with_capacity(h.layers.len());
        for (i, lh) in h.layers.iter().enumerate() {
            let activation = Activation::parse(&lh.activation).ok_or_else(|| {
                Error::load("decoder", format!("layer {i}: unknown activation '{}'", lh.activation))
            })?;
            let [outputs, inputs] = lh.weight_shape;
            if lh.bias_len != outputs {
                return Err(Error::load(
                    "decoder",
                    format!("layer {i}: bias length {} does not match {outputs} outputs", lh.bias_len),
                ));
            }
            let weights = reader.f32s(&format!("layer {i} weights"), outputs * inputs)?;
            let bias = reader.f32s(&format!("layer {i} bias"), lh.bias_len)?;
            layers.push(DenseLayer {
                inputs,
                outputs,
                weights,
                bias,
                activation,
            });
        }
        let raw = reader.f32s("membership", h.num_planes * h.num_convexes)?;
        reader.finish()?;
        let mut membership = Vec::with_capacity(raw.len());
        for (k, v) in raw.iter().enumerate() {
            membership.push(match *v {
                0.0 => false,
                1.0 => true,
                other => {
                    return Err(Error::load(
                        "decoder",
                        format!("membership entry {k} is {other}, expected 0 or 1"),
                    ))
                }
            });
        }
        BspDecoder::new(
            h.latent_dim,
            h.categories,
            layers,
            h.num_planes,
            h.num_convexes,
            membership,
            h.canonical_frame,
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }
}

/// Decoded planes grouped into convexes.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneSet {
    pub planes: Vec<Plane>,
    /// Member plane indices per convex.
    pub convexes: Vec<Vec<usize>>,
    pub frame: CanonicalFrame,
}

impl PlaneSet {
    /// `membership` is `planes.len() x num_convexes`, row-major.
    pub fn new(planes: Vec<Plane>, num_convexes: usize, membership: &[bool], frame: CanonicalFrame) -> Result<Self> {
        if membership.len() != planes.len() * num_convexes {
            return Err(Error::invalid("membership matrix size mismatch"));
        }
        if let Some(i) = planes
            .iter()
            .position(|p| !p.iter().all(|v| v.is_finite()) || p[0] == 0.0 && p[1] == 0.0 && p[2] == 0.0)
        {
            return Err(Error::invalid(format!("plane {i} has a zero or non-finite normal")));
        }
        let convexes = (0..num_convexes)
            .map(|c| (0..planes.len()).filter(|&p| membership[p * num_convexes + c]).collect())
            .collect();
        Ok(PlaneSet {
            planes,
            convexes,
            frame,
        })
    }

    /// A single convex made of every plane.
    pub fn single_convex(planes: Vec<Plane>, frame: CanonicalFrame) -> Result<Self> {
        let n = planes.len();
        Self::new(planes, 1, &vec![true; n], frame)
    }
}

/// Inside iff some convex has every member half-space satisfied.
pub fn occupancy(ps: &PlaneSet, p: &Point3<f64>) -> bool {
    ps.convexes.iter().any(|members| {
        !members.is_empty()
            && members.iter().all(|&k| {
                let [a, b, c, d] = ps.planes[k];
                a * p.x + b * p.y + c * p.z + d <= 0.0
            })
    })
}

/// Closed mesh of each convex intersected with the canonical cube; empty
/// convexes are omitted.
pub fn extract_convex_meshes(ps: &PlaneSet) -> Vec<TriMesh> {
    let (lo, hi) = ps.frame.unit_cube();
    ps.convexes
        .iter()
        .filter_map(|members| {
            let mut poly = ConvexPolytope::cuboid(lo, hi);
            for &k in members {
                poly.clip(&ps.planes[k]);
                if poly.is_empty() {
                    return None;
                }
            }
            let mesh = poly.to_mesh();
            (!mesh.is_empty()).then_some(mesh)
        })
        .collect()
}

/// All convex meshes concatenated (no boolean union).
pub fn extract_mesh(ps: &PlaneSet) -> TriMesh {
    let mut out = TriMesh::default();
    for m in extract_convex_meshes(ps) {
        out.append(&m);
    }
    out
}

/// `(1 - t) * a + t * b`.
pub fn interpolate_latent(a: &[f64], b: &[f64], t: f64) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "cannot interpolate codes of dimension {} and {}",
            a.len(),
            b.len()
        )));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("interpolation weight {t} outside [0, 1]")));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (1.0 - t) * x + t * y).collect())
}
