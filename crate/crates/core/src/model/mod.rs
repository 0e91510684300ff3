//! The dual-scale slide classifier: per-patch cell pooling with a spatial
//! attention bias, outer-product fusion into the patch embedding, gated
//! attention-MIL aggregation, and a sigmoid head. A plain attention-MIL
//! baseline over raw patch embeddings shares the aggregation and head.
//!
//! Everything is f64 and hand-differentiated; `backward` is checked against
//! central finite differences in the test suite.

pub mod adamw;
pub mod attmil;
pub mod bundle;
pub mod checkpoint;
pub mod linalg;
pub mod net;
pub mod pool;
pub mod train;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use linalg::Mat;

/// One 256-px patch at 20x magnification spans 512 px at the 40x
/// magnification cell centroids are measured in.
pub const PATCH_SPAN_40X: f64 = 512.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ModelDims {
    pub d_patch: usize,
    pub d_cell: usize,
    pub d_att: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        // 768 matches the tissue foundation-model embedding width.
        Self {
            d_patch: 768,
            d_cell: 32,
            d_att: 128,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelMode {
    PanSubNet,
    AttmilBaseline,
}

impl std::fmt::Display for ModelMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelMode::PanSubNet => "pansubnet",
            ModelMode::AttmilBaseline => "attmil",
        })
    }
}

impl std::str::FromStr for ModelMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pansubnet" => Ok(ModelMode::PanSubNet),
            "attmil" => Ok(ModelMode::AttmilBaseline),
            other => Err(Error::InvalidInput(format!(
                "unknown model mode `{other}` (expected pansubnet|attmil)"
            ))),
        }
    }
}

/// How the distance-bias scale is treated during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    /// Learnable, initialized to 1/512 (one patch width of normalization).
    #[default]
    Learnable,
    /// Pinned at 1.0: the literal "subtract raw pixel distance".
    Fixed,
}

impl std::str::FromStr for LambdaMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learnable" => Ok(LambdaMode::Learnable),
            "fixed" => Ok(LambdaMode::Fixed),
            other => Err(Error::InvalidInput(format!(
                "unknown lambda mode `{other}` (expected learnable|fixed)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellInstance {
    pub embedding: Vec<f64>,
    /// Centroid in pixels at 40x.
    pub x: f64,
    pub y: f64,
    /// One of the five detector cell categories.
    pub cell_class: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchInstance {
    pub embedding: Vec<f64>,
    pub gx: u32,
    pub gy: u32,
}

/// One slide's instances plus its binary label (basal = true) when known.
#[derive(Debug, Clone, PartialEq)]
pub struct SlideBag {
    pub slide_id: String,
    pub patches: Vec<PatchInstance>,
    pub cells: Vec<CellInstance>,
    pub label: Option<bool>,
}

impl SlideBag {
    pub fn new(
        slide_id: impl Into<String>,
        patches: Vec<PatchInstance>,
        cells: Vec<CellInstance>,
        label: Option<bool>,
    ) -> Result<Self> {
        let slide_id = slide_id.into();
        if patches.is_empty() {
            return Err(Error::InvalidInput(format!(
                "slide {slide_id} has no patches"
            )));
        }
        let d_patch = patches[0].embedding.len();
        let mut grid = std::collections::HashSet::new();
        for p in &patches {
            if p.embedding.len() != d_patch {
                return Err(Error::InvalidInput(format!(
                    "slide {slide_id}: inconsistent patch embedding widths"
                )));
            }
            if p.embedding.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "slide {slide_id}: non-finite patch embedding"
                )));
            }
            if !grid.insert((p.gx, p.gy)) {
                return Err(Error::InvalidInput(format!(
                    "slide {slide_id}: duplicate patch grid ({}, {})",
                    p.gx, p.gy
                )));
            }
        }
        if let Some(first) = cells.first() {
            let d_cell = first.embedding.len();
            for c in &cells {
                if c.embedding.len() != d_cell {
                    return Err(Error::InvalidInput(format!(
                        "slide {slide_id}: inconsistent cell embedding widths"
                    )));
                }
                if c.embedding.iter().any(|v| !v.is_finite())
                    || !c.x.is_finite()
                    || !c.y.is_finite()
                {
                    return Err(Error::InvalidInput(format!(
                        "slide {slide_id}: non-finite cell data"
                    )));
                }
            }
        }
        Ok(Self {
            slide_id,
            patches,
            cells,
            label,
        })
    }

    pub fn d_patch(&self) -> usize {
        self.patches[0].embedding.len()
    }
}

/// Map each cell to the patch whose grid square contains its centroid.
/// Cells landing on a grid square with no patch instance are dropped;
/// the second return value counts them.
pub fn assign_cells_to_patches(bag: &SlideBag) -> Result<(Vec<Vec<usize>>, usize)> {
    let mut by_grid = std::collections::HashMap::new();
    for (i, p) in bag.patches.iter().enumerate() {
        by_grid.insert((p.gx as i64, p.gy as i64), i);
    }
    let mut assignment = vec![Vec::new(); bag.patches.len()];
    let mut dropped = 0;
    for (ci, c) in bag.cells.iter().enumerate() {
        if c.x < 0.0 || c.y < 0.0 {
            return Err(Error::InvalidInput(format!(
                "slide {}: cell {ci} has negative centroid ({}, {})",
                bag.slide_id, c.x, c.y
            )));
        }
        let gx = (c.x / PATCH_SPAN_40X).floor() as i64;
        let gy = (c.y / PATCH_SPAN_40X).floor() as i64;
        match by_grid.get(&(gx, gy)) {
            Some(&p) => assignment[p].push(ci),
            None => dropped += 1,
        }
    }
    Ok((assignment, dropped))
}

/// Every learnable quantity of the model. The struct doubles as the
/// gradient and optimizer-moment container since those share its shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    /// Add 2D sinusoidal grid encodings to instances before MIL scoring.
    pub pos_enc: bool,
    pub cls_token: Vec<f64>,
    pub w_q: Mat,
    pub w_k: Mat,
    pub w_v: Mat,
    pub lambda_dist: f64,
    pub w_fuse: Mat,
    pub attn_v: Mat,
    pub attn_u: Mat,
    pub attn_w: Vec<f64>,
    pub head_w: Vec<f64>,
    pub head_b: f64,
}

impl ModelParams {
    pub fn zeros(dims: ModelDims) -> Self {
        let (dp, dc, da) = (dims.d_patch, dims.d_cell, dims.d_att);
        Self {
            dims,
            pos_enc: false,
            cls_token: vec![0.0; dc],
            w_q: Mat::zeros(dc, dc),
            w_k: Mat::zeros(dc, dc),
            w_v: Mat::zeros(dc, dc),
            lambda_dist: 0.0,
            w_fuse: Mat::zeros(dp, dp * dc),
            attn_v: Mat::zeros(da, dp),
            attn_u: Mat::zeros(da, dp),
            attn_w: vec![0.0; da],
            head_w: vec![0.0; dp],
            head_b: 0.0,
        }
    }

    /// Seeded init: Glorot-uniform matrices, N(0, 0.02^2) CLS token,
    /// zero head bias, distance scale per `lambda_mode`.
    pub fn init<R: Rng>(
        dims: ModelDims,
        pos_enc: bool,
        lambda_mode: LambdaMode,
        rng: &mut R,
    ) -> Self {
        let normal = Normal::new(0.0, 0.02).unwrap();
        let glorot = |rows: usize, cols: usize, rng: &mut R| {
            let a = (6.0 / (rows + cols) as f64).sqrt();
            let u = Uniform::new_inclusive(-a, a).unwrap();
            Mat::from_vec(rows, cols, (0..rows * cols).map(|_| u.sample(rng)).collect())
        };
        let glorot_vec = |len: usize, rng: &mut R| {
            let a = (6.0 / (len + 1) as f64).sqrt();
            let u = Uniform::new_inclusive(-a, a).unwrap();
            (0..len).map(|_| u.sample(rng)).collect::<Vec<f64>>()
        };
        let (dp, dc, da) = (dims.d_patch, dims.d_cell, dims.d_att);
        Self {
            dims,
            pos_enc,
            cls_token: (0..dc).map(|_| normal.sample(rng)).collect(),
            w_q: glorot(dc, dc, rng),
            w_k: glorot(dc, dc, rng),
            w_v: glorot(dc, dc, rng),
            lambda_dist: match lambda_mode {
                LambdaMode::Learnable => 1.0 / PATCH_SPAN_40X,
                LambdaMode::Fixed => 1.0,
            },
            w_fuse: glorot(dp, dp * dc, rng),
            attn_v: glorot(da, dp, rng),
            attn_u: glorot(da, dp, rng),
            attn_w: glorot_vec(da, rng),
            head_w: glorot_vec(dp, rng),
            head_b: 0.0,
        }
    }

    /// Flat views over every tensor, in the fixed serialization order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        vec![
            &self.cls_token,
            &self.w_q.data,
            &self.w_k.data,
            &self.w_v.data,
            std::slice::from_ref(&self.lambda_dist),
            &self.w_fuse.data,
            &self.attn_v.data,
            &self.attn_u.data,
            &self.attn_w,
            &self.head_w,
            std::slice::from_ref(&self.head_b),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.cls_token,
            &mut self.w_q.data,
            &mut self.w_k.data,
            &mut self.w_v.data,
            std::slice::from_mut(&mut self.lambda_dist),
            &mut self.w_fuse.data,
            &mut self.attn_v.data,
            &mut self.attn_u.data,
            &mut self.attn_w,
            &mut self.head_w,
            std::slice::from_mut(&mut self.head_b),
        ]
    }

    pub fn n_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}
