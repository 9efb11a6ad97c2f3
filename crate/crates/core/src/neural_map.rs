//! Sparse store of radial-basis neurons over the reduced space, with the
//! backward (B) and forward (F) connection matrices.
//!
//! Both matrices are indexed `(to, from)`. `B(to, from)` links a later
//! neuron `from` back to an earlier neuron `to`; `F(i, j) = B(j, i)` always.
//! The forward weight of the transition `r -> n` is therefore `F(n, r)`,
//! which is the entry `B(r, n)` of row `r` of B.

use std::collections::HashMap;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::codec::ReducedPoint;
use crate::error::{Error, Result};
use crate::kdtree::KdTree;
use crate::scalar::{dist_sq, dot, Real};

/// Grid spacing per reduced feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ResolutionVector<T>(pub Vec<T>);

impl<T: Real> ResolutionVector<T> {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::Config("resolution vector is empty".into()));
        }
        match self.0.iter().position(|r| !(r.is_finite() && *r > T::zero())) {
            Some(j) => Err(Error::Config(format!("resolution of feature {j} must be positive"))),
            None => Ok(()),
        }
    }
}

/// Median absolute step per feature across all consecutive samples.
pub fn compute_resolution<T: Real>(trajectories: &[Vec<ReducedPoint<T>>]) -> Result<ResolutionVector<T>> {
    let dim = trajectories
        .iter()
        .flat_map(|t| t.first())
        .map(ReducedPoint::dim)
        .next()
        .ok_or_else(|| Error::Config("no reduced samples to derive a resolution from".into()))?;
    let mut diffs: Vec<Vec<T>> = vec![Vec::new(); dim];
    for traj in trajectories {
        for pair in traj.windows(2) {
            for (j, d) in diffs.iter_mut().enumerate() {
                let (a, b) = (pair[0].0.get(j), pair[1].0.get(j));
                match (a, b) {
                    (Some(&a), Some(&b)) => d.push((b - a).abs()),
                    _ => {
                        return Err(Error::DimensionMismatch {
                            what: "reduced point",
                            expected: dim,
                            got: pair[0].dim().min(pair[1].dim()),
                        })
                    }
                }
            }
        }
    }
    if diffs[0].is_empty() {
        return Err(Error::Config("no consecutive pair of reduced samples".into()));
    }
    let mut res = Vec::with_capacity(dim);
    for (j, mut d) in diffs.into_iter().enumerate() {
        d.sort_by(|a, b| a.partial_cmp(b).expect("finite differences"));
        let n = d.len();
        let median = if n % 2 == 1 {
            d[n / 2]
        } else {
            (d[n / 2 - 1] + d[n / 2]) / T::lit(2.0)
        };
        if median > T::zero() {
            res.push(median);
        } else {
            match d.iter().find(|&&x| x > T::zero()) {
                Some(&smallest) => {
                    warn!("feature {j}: median step is zero, using smallest positive step");
                    res.push(smallest);
                }
                None => return Err(Error::DegenerateFeature { feature: j }),
            }
        }
    }
    Ok(ResolutionVector(res))
}

/// Unit vector `(pseudo, scale * a')` for a reduced point. Points whose scaled
/// norm exceeds one are pulled back onto the unit sphere.
pub fn augment<T: Real>(a_prime: &[T], scale: T) -> Vec<T> {
    augment_checked(a_prime, scale).0
}

/// As [`augment`], also reporting whether the point had to be clamped.
pub fn augment_checked<T: Real>(a_prime: &[T], scale: T) -> (Vec<T>, bool) {
    let mut out = Vec::with_capacity(a_prime.len() + 1);
    out.push(T::zero());
    out.extend(a_prime.iter().map(|&x| x * scale));
    let sq: T = out[1..].iter().map(|&w| w * w).sum();
    let clamped = sq > T::one();
    if clamped {
        let n = sq.sqrt();
        for w in &mut out[1..] {
            *w /= n;
        }
    } else {
        out[0] = (T::one() - sq).max(T::zero()).sqrt();
    }
    (out, clamped)
}

/// Row-sparse matrix with sorted column indices per row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseRows<T> {
    rows: Vec<Vec<(usize, T)>>,
}

impl<T: Real> SparseRows<T> {
    pub fn new(n: usize) -> Self {
        Self { rows: vec![Vec::new(); n] }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, T)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let row = &self.rows[i];
        match row.binary_search_by_key(&j, |e| e.0) {
            Ok(k) => row[k].1,
            Err(_) => T::zero(),
        }
    }

    /// Stores `v`; a zero removes the entry.
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        let row = &mut self.rows[i];
        match row.binary_search_by_key(&j, |e| e.0) {
            Ok(k) if v == T::zero() => {
                row.remove(k);
            }
            Ok(k) => row[k].1 = v,
            Err(_) if v == T::zero() => {}
            Err(k) => row.insert(k, (j, v)),
        }
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// All entries as `(row, col, value)` in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().map(move |&(j, v)| (i, j, v)))
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::new(self.rows.len());
        for (i, j, v) in self.entries() {
            // Row-major traversal keeps every transposed row sorted.
            t.rows[j].push((i, v));
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Neuron<T> {
    pub id: usize,
    pub cell: Vec<i64>,
    pub center: Vec<T>,
}

/// A neuron returned by a firing query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Firing<T> {
    pub id: usize,
    pub activation: T,
}

#[derive(Debug, Clone)]
pub struct NeuralMap<T> {
    neurons: Vec<Neuron<T>>,
    grid_index: HashMap<Vec<i64>, usize>,
    resolution: ResolutionVector<T>,
    res_multiplier: T,
    scale: T,
    backward: SparseRows<T>,
    forward: SparseRows<T>,
    index: KdTree<T>,
    clamped_centers: usize,
}

impl<T: Real> PartialEq for NeuralMap<T> {
    fn eq(&self, other: &Self) -> bool {
        self.neurons == other.neurons
            && self.resolution == other.resolution
            && self.res_multiplier == other.res_multiplier
            && self.scale == other.scale
            && self.backward == other.backward
    }
}

/// Global scale that maps every point inside the unit ball with a 5% margin.
pub fn fit_scale<T: Real>(trajectories: &[Vec<ReducedPoint<T>>]) -> T {
    let max = trajectories
        .iter()
        .flatten()
        .map(|p| dot(&p.0, &p.0).sqrt())
        .fold(T::zero(), T::max);
    if max > T::zero() {
        T::one() / (max * T::lit(1.05))
    } else {
        T::one()
    }
}

/// Creates one neuron per visited grid cell and per axis neighbor of it.
pub fn build_map<T: Real>(
    trajectories: &[Vec<ReducedPoint<T>>],
    resolution: &ResolutionVector<T>,
    res_multiplier: T,
) -> Result<NeuralMap<T>> {
    resolution.validate()?;
    let scale = fit_scale(trajectories);
    let mut builder = MapBuilder::new(resolution.clone(), res_multiplier, scale)?;
    for point in trajectories.iter().flatten() {
        let cell = builder.cell_of(&point.0)?;
        builder.insert(cell.clone());
        for j in 0..cell.len() {
            for delta in [-1, 1] {
                let mut n = cell.clone();
                n[j] += delta;
                builder.insert(n);
            }
        }
    }
    Ok(builder.finish())
}

struct MapBuilder<T> {
    neurons: Vec<Neuron<T>>,
    grid_index: HashMap<Vec<i64>, usize>,
    resolution: ResolutionVector<T>,
    res_multiplier: T,
    scale: T,
    clamped: usize,
}

impl<T: Real> MapBuilder<T> {
    fn new(resolution: ResolutionVector<T>, res_multiplier: T, scale: T) -> Result<Self> {
        resolution.validate()?;
        if !(res_multiplier.is_finite() && res_multiplier > T::zero()) {
            return Err(Error::Config("resolution multiplier must be positive".into()));
        }
        if !(scale.is_finite() && scale > T::zero()) {
            return Err(Error::Config("map scale must be positive".into()));
        }
        Ok(Self {
            neurons: Vec::new(),
            grid_index: HashMap::new(),
            resolution,
            res_multiplier,
            scale,
            clamped: 0,
        })
    }

    fn cell_of(&self, a: &[T]) -> Result<Vec<i64>> {
        cell_of(&self.resolution, self.res_multiplier, a)
    }

    fn insert(&mut self, cell: Vec<i64>) -> usize {
        if let Some(&id) = self.grid_index.get(&cell) {
            return id;
        }
        let id = self.neurons.len();
        let coords = cell_coords(&self.resolution, self.res_multiplier, &cell);
        let (center, clamped) = augment_checked(&coords, self.scale);
        self.clamped += usize::from(clamped);
        self.grid_index.insert(cell.clone(), id);
        self.neurons.push(Neuron { id, cell, center });
        id
    }

    fn finish(self) -> NeuralMap<T> {
        if self.clamped > 0 {
            warn!("{} neuron centers fell outside the unit ball and were clamped", self.clamped);
        }
        let n = self.neurons.len();
        let index = {
            let refs: Vec<&[T]> = self.neurons.iter().map(|n| n.center.as_slice()).collect();
            KdTree::build(&refs)
        };
        NeuralMap {
            neurons: self.neurons,
            grid_index: self.grid_index,
            resolution: self.resolution,
            res_multiplier: self.res_multiplier,
            scale: self.scale,
            backward: SparseRows::new(n),
            forward: SparseRows::new(n),
            index,
            clamped_centers: self.clamped,
        }
    }
}

fn cell_of<T: Real>(res: &ResolutionVector<T>, mult: T, a: &[T]) -> Result<Vec<i64>> {
    if a.len() != res.dim() {
        return Err(Error::DimensionMismatch {
            what: "reduced point",
            expected: res.dim(),
            got: a.len(),
        });
    }
    a.iter()
        .zip(&res.0)
        .map(|(&x, &r)| {
            (x / (r * mult))
                .round()
                .to_i64()
                .ok_or_else(|| Error::Config(format!("reduced coordinate {x} has no grid cell")))
        })
        .collect()
}

fn cell_coords<T: Real>(res: &ResolutionVector<T>, mult: T, cell: &[i64]) -> Vec<T> {
    cell.iter()
        .zip(&res.0)
        .map(|(&c, &r)| T::from_i64(c).expect("cell index representable") * r * mult)
        .collect()
}

impl<T: Real> NeuralMap<T> {
    /// Map over explicit grid cells (duplicates collapse), with no connections.
    pub fn from_cells(
        cells: impl IntoIterator<Item = Vec<i64>>,
        resolution: ResolutionVector<T>,
        res_multiplier: T,
        scale: T,
    ) -> Result<Self> {
        let dim = resolution.dim();
        let mut builder = MapBuilder::new(resolution, res_multiplier, scale)?;
        for cell in cells {
            if cell.len() != dim {
                return Err(Error::DimensionMismatch {
                    what: "grid cell",
                    expected: dim,
                    got: cell.len(),
                });
            }
            builder.insert(cell);
        }
        Ok(builder.finish())
    }

    pub fn len(&self) -> usize {
        self.neurons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neurons.is_empty()
    }

    /// Dimension of the reduced space.
    pub fn dim(&self) -> usize {
        self.resolution.dim()
    }

    pub fn neurons(&self) -> &[Neuron<T>] {
        &self.neurons
    }

    pub fn neuron(&self, id: usize) -> Result<&Neuron<T>> {
        self.neurons.get(id).ok_or(Error::UnknownNeuron(id))
    }

    pub fn resolution(&self) -> &ResolutionVector<T> {
        &self.resolution
    }

    pub fn res_multiplier(&self) -> T {
        self.res_multiplier
    }

    pub fn scale(&self) -> T {
        self.scale
    }

    /// Number of neuron centers that had to be clamped onto the unit sphere.
    pub fn clamped_centers(&self) -> usize {
        self.clamped_centers
    }

    pub fn backward(&self) -> &SparseRows<T> {
        &self.backward
    }

    pub fn forward(&self) -> &SparseRows<T> {
        &self.forward
    }

    /// Successors `n` of `r` with forward weight `F(n, r) > 0`.
    pub fn successors(&self, r: usize) -> &[(usize, T)] {
        self.backward.row(r)
    }

    /// Predecessors `p` of `n`, i.e. neurons with a forward edge `p -> n`.
    pub fn predecessors(&self, n: usize) -> &[(usize, T)] {
        self.forward.row(n)
    }

    /// Forward weight of the transition `from -> to`.
    pub fn forward_weight(&self, from: usize, to: usize) -> T {
        self.forward.get(to, from)
    }

    pub fn cell_of(&self, a_prime: &ReducedPoint<T>) -> Result<Vec<i64>> {
        cell_of(&self.resolution, self.res_multiplier, &a_prime.0)
    }

    pub fn neuron_at(&self, cell: &[i64]) -> Option<usize> {
        self.grid_index.get(cell).copied()
    }

    /// Reduced-space coordinates of a neuron's cell center.
    pub fn cell_center(&self, id: usize) -> Result<ReducedPoint<T>> {
        let n = self.neuron(id)?;
        Ok(ReducedPoint(cell_coords(&self.resolution, self.res_multiplier, &n.cell)))
    }

    /// Inverts the augmentation: strips the pseudo-feature and undoes the scale.
    pub fn center_to_reduced(&self, id: usize) -> Result<ReducedPoint<T>> {
        let n = self.neuron(id)?;
        Ok(ReducedPoint(n.center[1..].iter().map(|&w| w / self.scale).collect()))
    }

    pub fn augment_query(&self, a_prime: &ReducedPoint<T>) -> Result<Vec<T>> {
        if a_prime.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "reduced point",
                expected: self.dim(),
                got: a_prime.dim(),
            });
        }
        Ok(augment(&a_prime.0, self.scale))
    }

    /// The `phi` most active neurons for a query, most active first, ties by id.
    pub fn find_firing_neurons(&self, a_prime: &ReducedPoint<T>, phi: usize) -> Result<Vec<Firing<T>>> {
        let q = self.firing_preconditions(a_prime, phi)?;
        let k = phi.min(self.len());
        let nearest = self.index.nearest(&q, k);
        let kth = nearest.last().map_or(T::zero(), |x| x.0);
        // Distance and dot-product rankings can differ by rounding, so gather a
        // slightly larger ball and rank it by activation.
        let slack = T::lit(1024.0) * T::epsilon() * (T::one() + kth);
        let mut fired: Vec<Firing<T>> = self
            .index
            .within(&q, kth + slack)
            .into_iter()
            .map(|(_, id)| Firing {
                id,
                activation: dot(&self.neurons[id].center, &q),
            })
            .collect();
        rank_firings(&mut fired);
        fired.truncate(k);
        Ok(fired)
    }

    /// Linear-scan reference for [`Self::find_firing_neurons`].
    pub fn find_firing_neurons_exhaustive(&self, a_prime: &ReducedPoint<T>, phi: usize) -> Result<Vec<Firing<T>>> {
        let q = self.firing_preconditions(a_prime, phi)?;
        let mut fired: Vec<Firing<T>> = self
            .neurons
            .iter()
            .map(|n| Firing {
                id: n.id,
                activation: dot(&n.center, &q),
            })
            .collect();
        rank_firings(&mut fired);
        fired.truncate(phi);
        Ok(fired)
    }

    fn firing_preconditions(&self, a_prime: &ReducedPoint<T>, phi: usize) -> Result<Vec<T>> {
        if self.is_empty() {
            return Err(Error::EmptyMap);
        }
        if phi == 0 {
            return Err(Error::Config("bundle width must be at least 1".into()));
        }
        if phi > self.len() {
            warn!("bundle width {phi} exceeds the {} neurons of the map", self.len());
        }
        self.augment_query(a_prime)
    }

    /// Rank-1 neuron and its Euclidean distance in augmented space.
    pub fn nearest(&self, a_prime: &ReducedPoint<T>) -> Result<(usize, T)> {
        let best = self.find_firing_neurons(a_prime, 1)?[0];
        let q = self.augment_query(a_prime)?;
        Ok((best.id, dist_sq(&self.neurons[best.id].center, &q).sqrt()))
    }

    /// Sets `B(to, from)` and its mirror `F(from, to)`.
    pub fn set_backward(&mut self, to: usize, from: usize, w: T) -> Result<()> {
        self.neuron(to)?;
        self.neuron(from)?;
        if !(w >= T::zero() && w <= T::one()) {
            return Err(Error::Config(format!("connection weight {w} outside [0, 1]")));
        }
        self.backward.set(to, from, w);
        self.forward.set(from, to, w);
        Ok(())
    }

    /// Sets the forward weight of the transition `from -> to`.
    pub fn set_forward_edge(&mut self, from: usize, to: usize, w: T) -> Result<()> {
        self.set_backward(from, to, w)
    }

    pub fn backward_weight(&self, to: usize, from: usize) -> T {
        self.backward.get(to, from)
    }

    /// Verifies unit-norm centers, the grid bijection, F = Bᵀ and weight bounds.
    pub fn check_invariants(&self) -> Result<()> {
        let tol = if std::mem::size_of::<T>() == 4 { 1e-5 } else { 1e-9 };
        for n in &self.neurons {
            let norm = dot(&n.center, &n.center).sqrt();
            if (norm - T::one()).abs().as_f64() > tol || n.center[0] < T::zero() {
                return Err(Error::Format {
                    kind: "map",
                    detail: format!("neuron {} center is not a unit vector", n.id),
                });
            }
            if self.grid_index.get(&n.cell) != Some(&n.id) {
                return Err(Error::Format {
                    kind: "map",
                    detail: format!("grid index does not map back to neuron {}", n.id),
                });
            }
        }
        if self.grid_index.len() != self.neurons.len() {
            return Err(Error::Format {
                kind: "map",
                detail: "grid index is not a bijection".into(),
            });
        }
        if self.forward != self.backward.transpose() {
            return Err(Error::Format {
                kind: "map",
                detail: "forward matrix is not the transpose of the backward matrix".into(),
            });
        }
        if let Some((i, j, w)) = self.backward.entries().find(|e| !(e.2 > T::zero() && e.2 <= T::one())) {
            return Err(Error::Format {
                kind: "map",
                detail: format!("weight B({i},{j}) = {w} outside (0, 1]"),
            });
        }
        Ok(())
    }
}

fn rank_firings<T: Real>(fired: &mut [Firing<T>]) {
    fired.sort_by(|a, b| {
        b.activation
            .partial_cmp(&a.activation)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.id.cmp(&b.id))
    });
}

/// On-disk form of a map. F is rebuilt from B on load.
#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct MapRecord<T> {
    resolution: ResolutionVector<T>,
    res_multiplier: T,
    scale: T,
    neurons: Vec<NeuronRecord<T>>,
    backward: Vec<(usize, usize, T)>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct NeuronRecord<T> {
    cell: Vec<i64>,
    center: Vec<T>,
}

impl<T: Real> Serialize for NeuralMap<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        struct Neurons<'a, T>(&'a [Neuron<T>]);
        impl<T: Real> Serialize for Neurons<'_, T> {
            fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.collect_seq(self.0.iter().map(|n| NeuronRecordRef {
                    cell: &n.cell,
                    center: &n.center,
                }))
            }
        }
        #[derive(Serialize)]
        #[serde(bound = "T: Real")]
        struct NeuronRecordRef<'a, T> {
            cell: &'a [i64],
            center: &'a [T],
        }
        let entries: Vec<(usize, usize, T)> = self.backward.entries().collect();
        let mut st = s.serialize_struct("MapRecord", 5)?;
        st.serialize_field("resolution", &self.resolution)?;
        st.serialize_field("res_multiplier", &self.res_multiplier)?;
        st.serialize_field("scale", &self.scale)?;
        st.serialize_field("neurons", &Neurons(&self.neurons))?;
        st.serialize_field("backward", &entries)?;
        st.end()
    }
}

impl<'de, T: Real> Deserialize<'de> for NeuralMap<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = MapRecord::<T>::deserialize(d)?;
        NeuralMap::try_from(rec).map_err(serde::de::Error::custom)
    }
}

impl<T: Real> TryFrom<MapRecord<T>> for NeuralMap<T> {
    type Error = Error;

    fn try_from(rec: MapRecord<T>) -> Result<Self> {
        let dim = rec.resolution.dim();
        let mut builder = MapBuilder::new(rec.resolution, rec.res_multiplier, rec.scale)?;
        let mut centers = Vec::with_capacity(rec.neurons.len());
        for n in rec.neurons {
            if n.cell.len() != dim || n.center.len() != dim + 1 {
                return Err(Error::Format {
                    kind: "map",
                    detail: "neuron dimension disagrees with the resolution".into(),
                });
            }
            let id = builder.insert(n.cell);
            if id != centers.len() {
                return Err(Error::Format {
                    kind: "map",
                    detail: format!("duplicate grid cell for neuron {}", centers.len()),
                });
            }
            centers.push(n.center);
        }
        for (n, c) in builder.neurons.iter_mut().zip(centers) {
            n.center = c;
        }
        let mut map = builder.finish();
        for (to, from, w) in rec.backward {
            map.set_backward(to, from, w)?;
        }
        map.check_invariants()?;
        Ok(map)
    }
}
