//! Finite lattice boxes used as stand-ins for discretized spaces: exact
//! distances to a basepoint, closed balls, the weight field
//! `w(x) = 1/(1 + |B(x₀, d(x, x₀))|)`, cell decompositions and
//! `ℓ_{p,∞}(L_∞)` norms of site fields.

use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqspace::{decreasing_rearrangement, lorentz_quasinorm, QuasiNormParams};

/// Default cap on the number of sites of a geometry.
pub const DEFAULT_SITE_CAP: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    #[default]
    Euclidean,
    #[serde(alias = "graph-ℓ¹", alias = "l1")]
    GraphL1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    #[serde(alias = "dirichlet-truncation")]
    Dirichlet,
    #[default]
    Periodic,
}

/// Config-level description of a geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometrySpec {
    pub dim: usize,
    /// One extent per axis, or a single extent used for all axes.
    pub extents: Vec<usize>,
    #[serde(default)]
    pub metric: Metric,
    #[serde(default)]
    pub boundary: Boundary,
}

impl GeometrySpec {
    pub fn build(&self, site_cap: usize) -> Result<LatticeGeometry> {
        let extents = match self.extents.len() {
            1 => vec![self.extents[0]; self.dim],
            n if n == self.dim => self.extents.clone(),
            n => {
                return Err(Error::config(
                    "geometry.extents",
                    format!("expected 1 or {} extents, got {n}", self.dim),
                ))
            }
        };
        LatticeGeometry::with_cap(&extents, self.metric, self.boundary, site_cap)
    }
}

/// Box of integer sites with the basepoint at `⌊L_i/2⌋` on every axis.
/// Site indices are row-major with the last axis fastest.
#[derive(Debug)]
pub struct LatticeGeometry {
    extents: Vec<usize>,
    strides: Vec<usize>,
    metric: Metric,
    boundary: Boundary,
    n_sites: usize,
    keys: OnceLock<Vec<u64>>,
}

impl Clone for LatticeGeometry {
    fn clone(&self) -> Self {
        Self {
            extents: self.extents.clone(),
            strides: self.strides.clone(),
            metric: self.metric,
            boundary: self.boundary,
            n_sites: self.n_sites,
            keys: OnceLock::new(),
        }
    }
}

impl PartialEq for LatticeGeometry {
    fn eq(&self, other: &Self) -> bool {
        self.extents == other.extents && self.metric == other.metric && self.boundary == other.boundary
    }
}

impl LatticeGeometry {
    pub fn new(extents: &[usize], metric: Metric, boundary: Boundary) -> Result<Self> {
        Self::with_cap(extents, metric, boundary, DEFAULT_SITE_CAP)
    }

    pub fn with_cap(extents: &[usize], metric: Metric, boundary: Boundary, site_cap: usize) -> Result<Self> {
        if extents.is_empty() {
            return Err(Error::param("lattice needs at least one axis"));
        }
        if extents.contains(&0) {
            return Err(Error::param("lattice extents must be positive"));
        }
        let n_sites = extents
            .iter()
            .try_fold(1usize, |acc, &l| acc.checked_mul(l))
            .filter(|&n| n <= site_cap)
            .ok_or_else(|| Error::Capability(format!("lattice {extents:?} exceeds the site cap {site_cap}")))?;
        let mut strides = vec![1; extents.len()];
        for i in (0..extents.len() - 1).rev() {
            strides[i] = strides[i + 1] * extents[i + 1];
        }
        Ok(Self {
            extents: extents.to_vec(),
            strides,
            metric,
            boundary,
            n_sites,
            keys: OnceLock::new(),
        })
    }

    /// `d`-dimensional cube of side `extent`.
    pub fn cube(dim: usize, extent: usize, metric: Metric, boundary: Boundary) -> Result<Self> {
        Self::new(&vec![extent; dim], metric, boundary)
    }

    pub fn dim(&self) -> usize {
        self.extents.len()
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn basepoint_coords(&self) -> Vec<usize> {
        self.extents.iter().map(|l| l / 2).collect()
    }

    pub fn basepoint(&self) -> usize {
        self.index(&self.basepoint_coords())
    }

    pub fn coords(&self, site: usize) -> Vec<usize> {
        self.extents
            .iter()
            .zip(&self.strides)
            .map(|(l, s)| (site / s) % l)
            .collect()
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords.iter().zip(&self.strides).map(|(c, s)| c * s).sum()
    }

    /// Per-axis offsets from the basepoint, minimum image on periodic axes.
    pub fn displacement(&self, site: usize) -> Vec<i64> {
        let base = self.basepoint_coords();
        self.coords(site)
            .iter()
            .zip(&base)
            .zip(&self.extents)
            .map(|((&c, &b), &l)| {
                let raw = c as i64 - b as i64;
                match self.boundary {
                    Boundary::Dirichlet => raw,
                    Boundary::Periodic => {
                        let l = l as i64;
                        let m = raw.rem_euclid(l);
                        if m > l / 2 {
                            m - l
                        } else {
                            m
                        }
                    }
                }
            })
            .collect()
    }

    /// Exact integer distance key: squared distance for the euclidean
    /// metric, the distance itself for graph-ℓ¹.
    pub fn distance_key(&self, site: usize) -> u64 {
        let disp = self.displacement(site);
        match self.metric {
            Metric::Euclidean => disp.iter().map(|d| (d * d) as u64).sum(),
            Metric::GraphL1 => disp.iter().map(|d| d.unsigned_abs()).sum(),
        }
    }

    pub fn distance_keys(&self) -> &[u64] {
        self.keys
            .get_or_init(|| (0..self.n_sites).map(|s| self.distance_key(s)).collect())
    }

    pub fn key_to_distance(&self, key: u64) -> f64 {
        match self.metric {
            Metric::Euclidean => (key as f64).sqrt(),
            Metric::GraphL1 => key as f64,
        }
    }

    pub fn distance(&self, site: usize) -> f64 {
        self.key_to_distance(self.distance_keys()[site])
    }

    /// Largest key whose distance is `≤ radius`.
    pub fn radius_key(&self, radius: f64) -> u64 {
        // the slack absorbs rounding in radii produced as sqrt of integers
        match self.metric {
            Metric::Euclidean => (radius * radius * (1.0 + 1e-12) + 1e-12).floor() as u64,
            Metric::GraphL1 => (radius * (1.0 + 1e-12) + 1e-12).floor() as u64,
        }
    }

    /// Largest distance from the basepoint.
    pub fn diameter(&self) -> f64 {
        self.key_to_distance(self.distance_keys().iter().copied().max().unwrap_or(0))
    }

    /// Nearest neighbours along each axis (`±1`). Dirichlet drops sites that
    /// leave the box; periodic wraps, so extent 2 yields the same neighbour
    /// twice and extent 1 yields the site itself.
    pub fn neighbors(&self, site: usize) -> Vec<usize> {
        let coords = self.coords(site);
        let mut out = Vec::with_capacity(2 * self.dim());
        for (axis, (&c, &l)) in coords.iter().zip(&self.extents).enumerate() {
            let stride = self.strides[axis];
            let base = site - c * stride;
            for step in [-1i64, 1] {
                let n = c as i64 + step;
                let n = match self.boundary {
                    Boundary::Dirichlet if n < 0 || n >= l as i64 => continue,
                    Boundary::Dirichlet => n as usize,
                    Boundary::Periodic => n.rem_euclid(l as i64) as usize,
                };
                out.push(base + n * stride);
            }
        }
        out
    }

    /// Sorted distinct distance keys with the closed-ball volume at each.
    pub fn volume_steps(&self) -> Vec<(u64, usize)> {
        let mut keys = self.distance_keys().to_vec();
        keys.sort_unstable();
        let mut steps: Vec<(u64, usize)> = Vec::new();
        for (i, k) in keys.iter().enumerate() {
            match steps.last_mut() {
                Some(last) if last.0 == *k => last.1 = i + 1,
                _ => steps.push((*k, i + 1)),
            }
        }
        steps
    }
}

/// `|B(x₀, R)|`, closed ball, counting measure.
pub fn ball_volume(geom: &LatticeGeometry, radius: f64) -> usize {
    let cut = geom.radius_key(radius.max(0.0));
    geom.distance_keys().iter().filter(|&&k| k <= cut).count()
}

/// Mask of sites with `d(x, x₀) ≤ R`.
pub fn ball_indicator(geom: &LatticeGeometry, radius: f64) -> Vec<bool> {
    let cut = geom.radius_key(radius.max(0.0));
    geom.distance_keys().iter().map(|&k| k <= cut).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightField {
    pub values: Vec<f64>,
    pub basepoint: usize,
}

impl WeightField {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `χ_{[ε,∞)}(w)` as a site mask.
    pub fn level_mask(&self, eps: f64) -> Vec<bool> {
        self.values.iter().map(|&w| w >= eps).collect()
    }
}

pub fn weight_field(geom: &LatticeGeometry) -> WeightField {
    let steps = geom.volume_steps();
    let values = geom
        .distance_keys()
        .iter()
        .map(|k| {
            let i = steps.partition_point(|s| s.0 < *k);
            1.0 / (1.0 + steps[i].1 as f64)
        })
        .collect();
    WeightField {
        values,
        basepoint: geom.basepoint(),
    }
}

/// `R(ε) = max{R : 1/(1+|B(x₀,R)|) ≥ ε}` over achieved distances, or `None`
/// when even the basepoint ball is too heavy.
pub fn radius_for_epsilon(geom: &LatticeGeometry, eps: f64) -> Option<f64> {
    geom.volume_steps()
        .iter()
        .take_while(|(_, vol)| 1.0 / (1.0 + *vol as f64) >= eps)
        .last()
        .map(|(k, _)| geom.key_to_distance(*k))
}

/// Partition of sites into cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CellDecomposition {
    cell_of: Vec<usize>,
    n_cells: usize,
}

impl CellDecomposition {
    pub fn singletons(geom: &LatticeGeometry) -> Self {
        Self {
            cell_of: (0..geom.n_sites()).collect(),
            n_cells: geom.n_sites(),
        }
    }

    /// Axis-aligned blocks of side `b` starting at the box corner; blocks at
    /// the far faces may be partial.
    pub fn blocks(geom: &LatticeGeometry, side: usize) -> Result<Self> {
        if side == 0 {
            return Err(Error::param("block side must be positive"));
        }
        let per_axis: Vec<usize> = geom.extents().iter().map(|l| l.div_ceil(side)).collect();
        let cell_of = (0..geom.n_sites())
            .map(|s| {
                geom.coords(s)
                    .iter()
                    .zip(&per_axis)
                    .fold(0, |acc, (c, n)| acc * n + c / side)
            })
            .collect();
        Ok(Self {
            cell_of,
            n_cells: per_axis.iter().product(),
        })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn cell_of(&self, site: usize) -> usize {
        self.cell_of[site]
    }

    /// Per-cell `sup |f|`.
    pub fn cell_sup(&self, field: &[f64]) -> Result<Vec<f64>> {
        if field.len() != self.cell_of.len() {
            return Err(Error::param(format!(
                "field has {} sites, cells cover {}",
                field.len(),
                self.cell_of.len()
            )));
        }
        let mut sup = vec![0.0f64; self.n_cells];
        for (v, &c) in field.iter().zip(&self.cell_of) {
            sup[c] = sup[c].max(v.abs());
        }
        Ok(sup)
    }
}

/// `‖f‖_{ℓ_{p,∞}(L_∞)}`: per-cell sup norms, rearranged, then the weak
/// `ℓ_p` quasinorm `sup_k (k+1)^{1/p} μ(k)`.
pub fn ell_p_infty_linfty_norm(field: &[f64], cells: &CellDecomposition, p: f64) -> Result<f64> {
    let params = QuasiNormParams::weak(p)?;
    let sups = cells.cell_sup(field)?;
    Ok(lorentz_quasinorm(&decreasing_rearrangement(&sups), params))
}

/// Writes `site,value` rows.
pub fn write_site_csv<T: ToString>(path: &Path, values: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["site", "value"])?;
    for (i, v) in values.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chain(n: usize) -> LatticeGeometry {
        LatticeGeometry::new(&[n], Metric::Euclidean, Boundary::Dirichlet).unwrap()
    }

    fn square(n: usize, metric: Metric) -> LatticeGeometry {
        LatticeGeometry::new(&[n, n], metric, Boundary::Dirichlet).unwrap()
    }

    #[test]
    fn ball_volume_examples() {
        assert_eq!(ball_volume(&chain(21), 3.0), 7);
        assert_eq!(ball_volume(&square(11, Metric::GraphL1), 1.0), 5);
        assert_eq!(ball_volume(&square(11, Metric::Euclidean), 2.0), 13);
        // enumeration oracle for a non-integer radius
        let g = square(21, Metric::Euclidean);
        let r: f64 = 5.0f64.sqrt();
        let oracle = (-10i64..=10)
            .flat_map(|x| (-10i64..=10).map(move |y| x * x + y * y))
            .filter(|&k| k <= 5)
            .count();
        assert_eq!(ball_volume(&g, r), oracle);
    }

    #[test]
    fn ball_indicator_examples() {
        let g = square(11, Metric::Euclidean);
        let m0 = ball_indicator(&g, 0.0);
        assert_eq!(m0.iter().filter(|b| **b).count(), 1);
        assert!(m0[g.basepoint()]);
        assert!(ball_indicator(&g, g.diameter()).iter().all(|b| *b));
        let m2 = ball_indicator(&g, 2.0);
        for (s, inside) in m2.iter().enumerate() {
            let d = g.displacement(s);
            assert_eq!(*inside, d[0] * d[0] + d[1] * d[1] <= 4);
        }
        assert_eq!(m2.iter().filter(|b| **b).count(), 13);
    }

    #[test]
    fn weight_field_examples() {
        let g = chain(31);
        let w = weight_field(&g);
        assert_eq!(w.values[g.basepoint()], 0.5);
        for s in 0..g.n_sites() {
            let k = g.distance(s);
            assert!((w.values[s] - 1.0 / (2.0 * k + 2.0)).abs() < 1e-15);
        }
        let g2 = square(9, Metric::GraphL1);
        let w2 = weight_field(&g2);
        let c = g2.basepoint_coords();
        let next = g2.index(&[c[0] + 1, c[1]]);
        assert!((w2.values[next] - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn weak_l1_norm_examples() {
        // enumeration: w = 1/(2k+2) at distance k, sorted, sup (j+1)·μ(j)
        let g = chain(15);
        let w = weight_field(&g);
        let mut mu = w.values.clone();
        mu.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let oracle = mu.iter().enumerate().map(|(j, m)| (j + 1) as f64 * m).fold(0.0, f64::max);
        let got = ell_p_infty_linfty_norm(&w.values, &CellDecomposition::singletons(&g), 1.0).unwrap();
        assert!((got - oracle).abs() < 1e-15);
        assert!((got - 15.0 / 16.0).abs() < 1e-15);

        let g10 = chain(10);
        let ones = vec![1.0; 10];
        let cells = CellDecomposition::singletons(&g10);
        assert_eq!(ell_p_infty_linfty_norm(&ones, &cells, 1.0).unwrap(), 10.0);

        let mut delta = vec![0.0; 10];
        delta[g10.basepoint()] = 1.0;
        for p in [0.5, 1.0, 2.0, 7.0] {
            assert!((ell_p_infty_linfty_norm(&delta, &cells, p).unwrap() - 1.0).abs() < 1e-15);
        }
        assert!(ell_p_infty_linfty_norm(&delta, &cells, 0.0).is_err());
    }

    #[test]
    fn weak_l1_norm_of_weight_grows_toward_one() {
        let mut prev = 0.0;
        for n in [5, 15, 51, 151, 1001] {
            let g = chain(n);
            let w = weight_field(&g);
            let v = ell_p_infty_linfty_norm(&w.values, &CellDecomposition::singletons(&g), 1.0).unwrap();
            assert!(v <= 1.0 && v >= prev, "n={n}: {v}");
            prev = v;
        }
        assert!(prev > 0.99);
    }

    #[test]
    fn block_cells_partition_sites() {
        let g = LatticeGeometry::new(&[7, 5], Metric::Euclidean, Boundary::Periodic).unwrap();
        let cells = CellDecomposition::blocks(&g, 2).unwrap();
        assert_eq!(cells.n_cells(), 4 * 3);
        let mut seen = vec![0; cells.n_cells()];
        for s in 0..g.n_sites() {
            seen[cells.cell_of(s)] += 1;
        }
        assert_eq!(seen.iter().sum::<usize>(), 35);
        assert!(seen.iter().all(|&c| c >= 1 && c <= 4));
        let sups = cells.cell_sup(&(0..35).map(|i| i as f64).collect::<Vec<_>>()).unwrap();
        assert_eq!(sups[cells.cell_of(34)], 34.0);
        assert!(CellDecomposition::blocks(&g, 0).is_err());
    }

    #[test]
    fn periodic_distances_use_minimum_image() {
        let g = LatticeGeometry::new(&[10], Metric::GraphL1, Boundary::Periodic).unwrap();
        // basepoint 5; site 0 is 5 away either way, site 9 is 4 away
        assert_eq!(g.distance(0), 5.0);
        assert_eq!(g.distance(9), 4.0);
        assert_eq!(g.neighbors(0), vec![9, 1]);
        let d = LatticeGeometry::new(&[10], Metric::GraphL1, Boundary::Dirichlet).unwrap();
        assert_eq!(d.neighbors(0), vec![1]);
    }

    #[test]
    fn site_cap_is_enforced() {
        let e = LatticeGeometry::with_cap(&[100, 100], Metric::Euclidean, Boundary::Periodic, 5000);
        assert!(matches!(e, Err(Error::Capability(_))));
    }

    #[test]
    fn geometry_spec_round_trip() {
        let spec: GeometrySpec =
            serde_json::from_str(r#"{"dim":2,"extents":[8],"metric":"graph-l1","boundary":"dirichlet-truncation"}"#)
                .unwrap();
        let g = spec.build(DEFAULT_SITE_CAP).unwrap();
        assert_eq!(g.extents(), &[8, 8]);
        assert_eq!(g.metric(), Metric::GraphL1);
        assert_eq!(g.boundary(), Boundary::Dirichlet);
        let bad = GeometrySpec {
            dim: 3,
            extents: vec![4, 4],
            metric: Metric::Euclidean,
            boundary: Boundary::Periodic,
        };
        assert!(matches!(bad.build(DEFAULT_SITE_CAP), Err(Error::Config { .. })));
    }

    #[test]
    fn site_csv_has_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        write_site_csv(&path, &[0.5, 0.25]).unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        assert_eq!(body, "site,value\n0,0.5\n1,0.25\n");
    }

    fn arb_geometry() -> impl Strategy<Value = LatticeGeometry> {
        (1usize..=3, 1usize..=9, any::<bool>(), any::<bool>()).prop_map(|(d, l, e, p)| {
            let metric = if e { Metric::Euclidean } else { Metric::GraphL1 };
            let boundary = if p { Boundary::Periodic } else { Boundary::Dirichlet };
            LatticeGeometry::cube(d, l, metric, boundary).unwrap()
        })
    }

    proptest! {
        #[test]
        fn level_sets_of_weight_are_balls(g in arb_geometry()) {
            let w = weight_field(&g);
            let mut levels = w.values.clone();
            levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
            levels.dedup();
            for &eps in &levels {
                let r = radius_for_epsilon(&g, eps).unwrap();
                prop_assert_eq!(w.level_mask(eps), ball_indicator(&g, r));
            }
            // above the largest value the level set is empty
            prop_assert!(radius_for_epsilon(&g, 0.75).is_none());
        }

        #[test]
        fn weight_is_radial_and_bounded(g in arb_geometry()) {
            let w = weight_field(&g);
            let keys = g.distance_keys();
            for a in 0..g.n_sites() {
                prop_assert!(w.values[a] > 0.0 && w.values[a] <= 1.0);
                for b in 0..g.n_sites() {
                    if keys[a] <= keys[b] {
                        prop_assert!(w.values[a] >= w.values[b]);
                    }
                }
            }
        }

        #[test]
        fn ball_volume_is_monotone(g in arb_geometry(), r in 0.0..6.0f64, dr in 0.0..3.0f64) {
            prop_assert!(ball_volume(&g, r) <= ball_volume(&g, r + dr));
            // right-continuity at achieved distances
            for &(k, vol) in &g.volume_steps() {
                prop_assert_eq!(ball_volume(&g, g.key_to_distance(k)), vol);
            }
        }
    }
}
