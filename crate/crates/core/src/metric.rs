//! Metric spaces over user data.
//!
//! A user's data is a tuple with one point per registered component. Each
//! component lives in its own metric space; the product space carries the
//! `dist_∞` metric (maximum over per-component distances), which is what the
//! privacy accounting in [`crate::filter`] and [`crate::protocol`] operates
//! against.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Identifier of a data component within a user tuple.
pub type ComponentId = u32;

/// A metric over one data component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricDescriptor {
    /// `dist(a, b) = ‖a − b‖` on real vectors of a fixed dimension.
    Euclidean { dimension: usize },
    /// Number of differing records between two equal-length record
    /// sequences. Records are opaque hashes; only sensitivity bookkeeping is
    /// needed, not record contents.
    Hamming,
    /// `dist(a, b) = 1{a ≠ b}`.
    Discrete01,
}

impl MetricDescriptor {
    pub fn euclidean(dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::invalid("euclidean dimension must be positive"));
        }
        Ok(MetricDescriptor::Euclidean { dimension })
    }

    pub fn name(&self) -> &'static str {
        match self {
            MetricDescriptor::Euclidean { .. } => "euclidean",
            MetricDescriptor::Hamming => "hamming",
            MetricDescriptor::Discrete01 => "discrete01",
        }
    }
}

/// A point in one component's space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Point {
    /// Dense real vector (euclidean components).
    Real(Vec<f64>),
    /// Sequence of opaque record hashes (hamming components).
    Records(Vec<u64>),
    /// Single opaque value (discrete components).
    Atom(u64),
}

impl Point {
    pub fn real(coords: impl Into<Vec<f64>>) -> Self {
        Point::Real(coords.into())
    }

    /// Borrow the real coordinates, or fail for non-euclidean points.
    pub fn as_real(&self) -> Result<&[f64]> {
        match self {
            Point::Real(v) => Ok(v),
            _ => Err(Error::PointKindMismatch {
                metric: "euclidean",
            }),
        }
    }
}

/// Binds a component index to its metric space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub index: ComponentId,
    pub metric: MetricDescriptor,
}

/// One user's data: a map from component index to a point.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DataTuple {
    components: BTreeMap<ComponentId, Point>,
}

impl DataTuple {
    pub fn new() -> Self {
        Self::default()
    }

    /// Single euclidean component at the given index.
    pub fn single(index: ComponentId, point: Point) -> Self {
        let mut components = BTreeMap::new();
        components.insert(index, point);
        DataTuple { components }
    }

    pub fn insert(&mut self, index: ComponentId, point: Point) {
        self.components.insert(index, point);
    }

    pub fn get(&self, index: ComponentId) -> Result<&Point> {
        self.components
            .get(&index)
            .ok_or(Error::MissingComponent(index))
    }

    pub fn component_ids(&self) -> impl Iterator<Item = ComponentId> + '_ {
        self.components.keys().copied()
    }

    /// Checks every stored point against the dimension of its registered
    /// metric.
    pub fn validate(&self, specs: &[ComponentSpec]) -> Result<()> {
        for spec in specs {
            if let Some(point) = self.components.get(&spec.index) {
                check_point(&spec.metric, point)?;
            }
        }
        Ok(())
    }
}

fn check_point(metric: &MetricDescriptor, p: &Point) -> Result<()> {
    match (metric, p) {
        (MetricDescriptor::Euclidean { dimension }, Point::Real(v)) => {
            if v.len() != *dimension {
                return Err(Error::DimensionMismatch {
                    expected: *dimension,
                    got: v.len(),
                });
            }
            Ok(())
        }
        (MetricDescriptor::Euclidean { .. }, _) => Err(Error::PointKindMismatch {
            metric: "euclidean",
        }),
        (MetricDescriptor::Hamming, Point::Records(_)) => Ok(()),
        (MetricDescriptor::Hamming, _) => Err(Error::PointKindMismatch { metric: "hamming" }),
        // The discrete metric only needs equality, which every point kind has.
        (MetricDescriptor::Discrete01, _) => Ok(()),
    }
}

/// Distance between two points under the given metric.
pub fn distance(metric: &MetricDescriptor, a: &Point, b: &Point) -> Result<f64> {
    check_point(metric, a)?;
    check_point(metric, b)?;
    match metric {
        MetricDescriptor::Euclidean { .. } => {
            let (va, vb) = (a.as_real()?, b.as_real()?);
            if va.len() != vb.len() {
                return Err(Error::DimensionMismatch {
                    expected: va.len(),
                    got: vb.len(),
                });
            }
            Ok(va
                .iter()
                .zip(vb)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt())
        }
        MetricDescriptor::Hamming => {
            let (Point::Records(ra), Point::Records(rb)) = (a, b) else {
                return Err(Error::PointKindMismatch { metric: "hamming" });
            };
            if ra.len() != rb.len() {
                return Err(Error::DimensionMismatch {
                    expected: ra.len(),
                    got: rb.len(),
                });
            }
            Ok(ra.iter().zip(rb).filter(|(x, y)| x != y).count() as f64)
        }
        MetricDescriptor::Discrete01 => Ok(if a == b { 0.0 } else { 1.0 }),
    }
}

/// `dist_∞(x, y) = max_l dist_l(x(l), y(l))` over the given component specs.
///
/// With a single component this reduces exactly to the component distance.
pub fn product_distance(specs: &[ComponentSpec], x: &DataTuple, y: &DataTuple) -> Result<f64> {
    if !x.component_ids().eq(y.component_ids()) {
        return Err(Error::MismatchedComponents);
    }
    let mut max = 0.0_f64;
    for spec in specs {
        let (px, py) = (x.get(spec.index)?, y.get(spec.index)?);
        let d = distance(&spec.metric, px, py)?;
        if d > max {
            max = d;
        }
    }
    Ok(max)
}
