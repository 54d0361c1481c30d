//! Instance generation: seeded, fully reproducible problem instances made of
//! a weighted space, a raw subspace basis, a structure map, and a data pair.
//!
//! The serializable description is [`InstanceFile`]; [`InstanceFile::build`]
//! orthonormalizes the raw basis and wires up the map. Two generator
//! families cover the battery: grid-Hodge edge spaces and random subspaces.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::map::{MonotoneMap, NegatedPPowerMap, PPowerMap};
use crate::measure::{DataPair, ExponentPair, Field, MeasureSpace};
use crate::rng::SplitMix64;
use crate::subspace::{build_subspace, grid_gradient_raw_basis, grid_edges, SubspacePair};

/// Structure-map kind carried by an instance file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapKind {
    PPower,
    /// Sign-flipped power map; violates monotonicity. Exists to exercise
    /// audit and failure paths.
    NegatedPPower,
}

impl MapKind {
    pub fn label(&self) -> &'static str {
        match self {
            MapKind::PPower => "p-power",
            MapKind::NegatedPPower => "negated-p-power",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "p-power" => Ok(MapKind::PPower),
            "negated-p-power" => Ok(MapKind::NegatedPPower),
            other => Err(Error::Parse(format!("unknown map kind {other:?}"))),
        }
    }
}

/// Serializable description of one problem instance. The basis is stored
/// raw (pre-orthonormalization) so files stay human-readable and building
/// is deterministic.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceFile {
    pub schema_version: u32,
    pub weights: Vec<f64>,
    pub value_dim: usize,
    pub p: f64,
    pub basis: Vec<Vec<f64>>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub map_kind: MapKind,
    pub coefficient: Option<Vec<f64>>,
}

/// The concrete map owned by a built instance.
#[derive(Clone, Debug)]
pub enum InstanceMap {
    PPower(PPowerMap),
    Negated(NegatedPPowerMap),
}

impl InstanceMap {
    pub fn as_dyn(&self) -> &dyn MonotoneMap {
        match self {
            InstanceMap::PPower(m) => m,
            InstanceMap::Negated(m) => m,
        }
    }
}

/// A ready-to-solve instance.
#[derive(Clone, Debug)]
pub struct Instance {
    pub id: String,
    pub space: Arc<MeasureSpace>,
    pub subspace: SubspacePair,
    pub map: InstanceMap,
    pub f: DataPair,
}

impl Instance {
    pub fn map(&self) -> &dyn MonotoneMap {
        self.map.as_dyn()
    }
}

impl InstanceFile {
    /// Validate lengths and positivity.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != 1 {
            return Err(Error::Parse(format!("unsupported schema_version {}", self.schema_version)));
        }
        let n = self.weights.len();
        let len = n * self.value_dim;
        if self.a.len() != len || self.b.len() != len {
            return Err(Error::DimensionMismatch(format!(
                "data arrays must have {len} entries (N*d), got a: {}, b: {}",
                self.a.len(),
                self.b.len()
            )));
        }
        for row in &self.basis {
            if row.len() != len {
                return Err(Error::DimensionMismatch(format!(
                    "basis row must have {len} entries, got {}",
                    row.len()
                )));
            }
        }
        if !(self.p > 1.0) {
            return Err(Error::Domain(format!("instance exponent must exceed 1, got {}", self.p)));
        }
        if let Some(c) = &self.coefficient {
            if c.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "coefficient must have {n} entries, got {}",
                    c.len()
                )));
            }
        }
        Ok(())
    }

    /// Orthonormalize the raw basis and assemble the runtime instance.
    pub fn build(&self, id: &str) -> Result<Instance> {
        self.validate()?;
        let space = MeasureSpace::new(self.weights.clone(), self.value_dim)?;
        let raw: Vec<Field> = self
            .basis
            .iter()
            .map(|row| Field::new(space.clone(), row.clone()))
            .collect::<Result<_>>()?;
        let subspace = build_subspace(space.clone(), &raw)?;
        let exps = ExponentPair::new(self.p)?;
        let f = DataPair::new(
            Field::new(space.clone(), self.a.clone())?,
            Field::new(space.clone(), self.b.clone())?,
            exps,
        )?;
        let power = match &self.coefficient {
            Some(c) => PPowerMap::with_coefficient(self.p, c.clone())?,
            None => PPowerMap::new(self.p)?,
        };
        let map = match self.map_kind {
            MapKind::PPower => InstanceMap::PPower(power),
            MapKind::NegatedPPower => InstanceMap::Negated(NegatedPPowerMap(power)),
        };
        Ok(Instance { id: id.to_string(), space, subspace, map, f })
    }
}

/// Options for grid-Hodge generation.
#[derive(Clone, Copy, Debug)]
pub struct GridParams {
    pub rows: usize,
    pub cols: usize,
    pub unit_weights: bool,
    pub unit_coefficient: bool,
}

/// Options for random-subspace generation.
#[derive(Clone, Copy, Debug)]
pub struct RandomParams {
    pub points: usize,
    pub dim: usize,
    pub subspace_dim: usize,
    pub unit_weights: bool,
    pub unit_coefficient: bool,
}

/// Grid-Hodge instance: the space is the edge set of a `rows x cols` grid,
/// the subspace is spanned by the vertex gradients, data and coefficient are
/// seeded draws. Same seed, same file, byte for byte.
pub fn gen_grid_hodge(params: GridParams, p: f64, seed: u64) -> Result<InstanceFile> {
    if params.rows < 2 || params.cols < 2 {
        return Err(Error::Domain(format!(
            "grid must be at least 2x2, got {}x{}",
            params.rows, params.cols
        )));
    }
    ExponentPair::new(p)?;
    let edges = grid_edges(params.rows, params.cols);
    let n = edges.len();
    let mut rng = SplitMix64::new(seed);
    let weights: Vec<f64> = if params.unit_weights {
        vec![1.0; n]
    } else {
        (0..n).map(|_| rng.next_range(0.5, 2.0)).collect()
    };
    let basis = grid_gradient_raw_basis(params.rows, params.cols);
    let a: Vec<f64> = (0..n).map(|_| rng.next_gaussian()).collect();
    let b: Vec<f64> = (0..n).map(|_| rng.next_gaussian()).collect();
    let coefficient = if params.unit_coefficient {
        None
    } else {
        Some((0..n).map(|_| rng.next_range(0.5, 2.0)).collect())
    };
    let file = InstanceFile {
        schema_version: 1,
        weights,
        value_dim: 1,
        p,
        basis,
        a,
        b,
        map_kind: MapKind::PPower,
        coefficient,
    };
    file.validate()?;
    Ok(file)
}

/// Random instance: seeded weights, a Gaussian raw basis of the requested
/// dimension, Gaussian data, and a bounded positive coefficient.
pub fn gen_random(params: RandomParams, p: f64, seed: u64) -> Result<InstanceFile> {
    ExponentPair::new(p)?;
    let n = params.points;
    let d = params.dim;
    if n == 0 || d == 0 {
        return Err(Error::Domain("random instance wants points >= 1 and dim >= 1".into()));
    }
    if params.subspace_dim > n * d {
        return Err(Error::Domain(format!(
            "subspace dimension {} exceeds the space dimension {}",
            params.subspace_dim,
            n * d
        )));
    }
    let mut rng = SplitMix64::new(seed);
    let weights: Vec<f64> = if params.unit_weights {
        vec![1.0; n]
    } else {
        (0..n).map(|_| rng.next_range(0.5, 2.0)).collect()
    };
    let basis: Vec<Vec<f64>> = (0..params.subspace_dim)
        .map(|_| (0..n * d).map(|_| rng.next_gaussian()).collect())
        .collect();
    let a: Vec<f64> = (0..n * d).map(|_| rng.next_gaussian()).collect();
    let b: Vec<f64> = (0..n * d).map(|_| rng.next_gaussian()).collect();
    let coefficient = if params.unit_coefficient {
        None
    } else {
        Some((0..n).map(|_| rng.next_range(0.5, 2.0)).collect())
    };
    let file = InstanceFile {
        schema_version: 1,
        weights,
        value_dim: d,
        p,
        basis,
        a,
        b,
        map_kind: MapKind::PPower,
        coefficient,
    };
    file.validate()?;
    Ok(file)
}
