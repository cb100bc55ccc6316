//! Tensor-product space-time grids over axis-aligned boxes, node-attached
//! fields and the central-difference gradient.
//!
//! Time levels are `t_n = n * dt` for `n = 0..=nt`; level `nt` is the
//! terminal time. Interior nodes are numbered with the last axis fastest.
//! The extended lattice adds one layer of boundary nodes on every side,
//! and boundary nodes are numbered in extended-lattice order.

use std::io::{BufRead, Write};

use arrayvec::ArrayVec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NOT_BOUNDARY: usize = usize::MAX;

/// Box, resolution and horizon of a space-time grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Interior node counts per axis.
    pub nx: Vec<usize>,
    /// Number of time steps; there are `nt + 1` time levels.
    pub nt: usize,
    pub horizon: f64,
}

impl GridSpec {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, nx: Vec<usize>, nt: usize, horizon: f64) -> Self {
        Self {
            lo,
            hi,
            nx,
            nt,
            horizon,
        }
    }

    /// One-dimensional grid on `(lo, hi)`.
    pub fn interval(lo: f64, hi: f64, nx: usize, nt: usize, horizon: f64) -> Self {
        Self::new(vec![lo], vec![hi], vec![nx], nt, horizon)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.lo.len();
        if !(1..=2).contains(&d) {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1 or 2, got {d}"
            )));
        }
        if self.hi.len() != d || self.nx.len() != d {
            return Err(Error::InvalidGrid(
                "lo, hi and nx must have the same length".into(),
            ));
        }
        for axis in 0..d {
            let (lo, hi) = (self.lo[axis], self.hi[axis]);
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis}: non-finite bounds"
                )));
            }
            if hi <= lo {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis}: hi must exceed lo"
                )));
            }
            if self.nx[axis] < 3 {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis}: need at least 3 interior nodes, got {}",
                    self.nx[axis]
                )));
            }
        }
        if self.nt < 2 {
            return Err(Error::InvalidGrid(format!(
                "nt must be at least 2, got {}",
                self.nt
            )));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidGrid(
                "horizon must be positive and finite".into(),
            ));
        }
        Ok(())
    }
}

/// A neighbour in a stencil: either an interior node or a boundary node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Node {
    Interior(usize),
    Boundary(usize),
}

/// A validated grid with precomputed steps and boundary numbering.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    spec: GridSpec,
    dx: Vec<f64>,
    dt: f64,
    n_interior: usize,
    ext_shape: Vec<usize>,
    /// Extended flat index -> boundary index (or `NOT_BOUNDARY`).
    ring_index: Vec<usize>,
    /// Boundary index -> extended flat index.
    ring_nodes: Vec<usize>,
}

impl Grid {
    pub fn new(spec: GridSpec) -> Result<Self> {
        spec.validate()?;
        let d = spec.lo.len();
        let dx: Vec<f64> = (0..d)
            .map(|k| (spec.hi[k] - spec.lo[k]) / (spec.nx[k] + 1) as f64)
            .collect();
        let dt = spec.horizon / spec.nt as f64;
        let n_interior = spec.nx.iter().product();
        let ext_shape: Vec<usize> = spec.nx.iter().map(|n| n + 2).collect();
        let n_ext: usize = ext_shape.iter().product();
        let mut ring_index = vec![NOT_BOUNDARY; n_ext];
        let mut ring_nodes = Vec::new();
        for (flat, slot) in ring_index.iter_mut().enumerate() {
            let multi = unflatten(flat, &ext_shape);
            let on_edge = multi
                .iter()
                .zip(&ext_shape)
                .any(|(&i, &n)| i == 0 || i == n - 1);
            if on_edge {
                *slot = ring_nodes.len();
                ring_nodes.push(flat);
            }
        }
        Ok(Self {
            spec,
            dx,
            dt,
            n_interior,
            ext_shape,
            ring_index,
            ring_nodes,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dx.len()
    }

    pub fn dx(&self) -> &[f64] {
        &self.dx
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn nt(&self) -> usize {
        self.spec.nt
    }

    /// Number of time levels, `nt + 1`.
    pub fn levels(&self) -> usize {
        self.spec.nt + 1
    }

    pub fn horizon(&self) -> f64 {
        self.spec.horizon
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn n_boundary(&self) -> usize {
        self.ring_nodes.len()
    }

    pub fn time(&self, level: usize) -> f64 {
        if level == self.spec.nt {
            self.spec.horizon
        } else {
            level as f64 * self.dt
        }
    }

    pub fn lo(&self) -> &[f64] {
        &self.spec.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.spec.hi
    }

    /// Interior multi-index of an interior node.
    pub fn interior_multi(&self, node: usize) -> Vec<usize> {
        unflatten(node, &self.spec.nx)
    }

    fn interior_from_ext(&self, ext_multi: &[usize]) -> usize {
        let mut flat = 0;
        for (k, &i) in ext_multi.iter().enumerate() {
            flat = flat * self.spec.nx[k] + (i - 1);
        }
        flat
    }

    fn ext_coords(&self, ext_multi: &[usize]) -> Vec<f64> {
        ext_multi
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                if i == self.ext_shape[k] - 1 {
                    self.spec.hi[k]
                } else {
                    self.spec.lo[k] + i as f64 * self.dx[k]
                }
            })
            .collect()
    }

    /// Coordinates of an interior node.
    pub fn coords(&self, node: usize) -> Vec<f64> {
        let ext: Vec<usize> = self.interior_multi(node).iter().map(|i| i + 1).collect();
        self.ext_coords(&ext)
    }

    /// Coordinates of a boundary node.
    pub fn boundary_coords(&self, ring: usize) -> Vec<f64> {
        let multi = unflatten(self.ring_nodes[ring], &self.ext_shape);
        self.ext_coords(&multi)
    }

    /// Neighbour of an interior node one step along `axis` (`forward` picks +dx).
    pub fn neighbor(&self, node: usize, axis: usize, forward: bool) -> Node {
        let mut ext: Vec<usize> = self.interior_multi(node).iter().map(|i| i + 1).collect();
        if forward {
            ext[axis] += 1;
        } else {
            ext[axis] -= 1;
        }
        let flat = flatten(&ext, &self.ext_shape);
        match self.ring_index[flat] {
            NOT_BOUNDARY => Node::Interior(self.interior_from_ext(&ext)),
            r => Node::Boundary(r),
        }
    }

    /// Visits every node of the extended lattice in row order.
    pub fn extended_nodes(&self) -> impl Iterator<Item = Node> + '_ {
        (0..self.ring_index.len()).map(move |flat| match self.ring_index[flat] {
            NOT_BOUNDARY => {
                let multi = unflatten(flat, &self.ext_shape);
                Node::Interior(self.interior_from_ext(&multi))
            }
            r => Node::Boundary(r),
        })
    }

    pub fn node_coords(&self, node: Node) -> Vec<f64> {
        match node {
            Node::Interior(i) => self.coords(i),
            Node::Boundary(r) => self.boundary_coords(r),
        }
    }

    /// Whether the point lies in the open box.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .enumerate()
            .all(|(k, &v)| v > self.spec.lo[k] && v < self.spec.hi[k])
    }

    /// Parabolic-boundary membership of an extended-lattice node at a level:
    /// lateral boundary at all times, plus the closed box at the horizon.
    pub fn on_parabolic_boundary(&self, level: usize, node: Node) -> bool {
        level == self.spec.nt || matches!(node, Node::Boundary(_))
    }

    /// Nearest interior node to `x`, clamped into the interior index range.
    pub fn nearest_interior(&self, x: &[f64]) -> usize {
        let mut flat = 0;
        for k in 0..self.dim() {
            let pos = ((x[k] - self.spec.lo[k]) / self.dx[k]).round() as i64;
            let i = pos.clamp(1, self.spec.nx[k] as i64) as usize - 1;
            flat = flat * self.spec.nx[k] + i;
        }
        flat
    }

    /// Nearest time level to `t`.
    pub fn nearest_level(&self, t: f64) -> usize {
        ((t / self.dt).round().max(0.0) as usize).min(self.spec.nt)
    }

    /// Multilinear interpolation weights for `x` over interior nodes; points
    /// outside the interior hull are clamped onto it.
    pub fn interpolation_stencil(&self, x: &[f64]) -> ArrayVec<(usize, f64), 4> {
        let d = self.dim();
        let mut lower = [0usize; 2];
        let mut frac = [0.0; 2];
        for k in 0..d {
            let n = self.spec.nx[k];
            // interior node i sits at lo + (i+1) dx
            let pos = (x[k] - self.spec.lo[k]) / self.dx[k] - 1.0;
            let pos = pos.clamp(0.0, (n - 1) as f64);
            let i = (pos.floor() as usize).min(n - 2);
            lower[k] = i;
            frac[k] = pos - i as f64;
        }
        let mut out = ArrayVec::new();
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0;
            for k in 0..d {
                let up = (corner >> (d - 1 - k)) & 1 == 1;
                let i = lower[k] + usize::from(up);
                w *= if up { frac[k] } else { 1.0 - frac[k] };
                flat = flat * self.spec.nx[k] + i;
            }
            if w != 0.0 {
                out.push((flat, w));
            }
        }
        out
    }
}

/// Builds and validates a grid.
pub fn build_grid(spec: GridSpec) -> Result<Grid> {
    Grid::new(spec)
}

fn unflatten(mut flat: usize, shape: &[usize]) -> Vec<usize> {
    let mut out = vec![0; shape.len()];
    for k in (0..shape.len()).rev() {
        out[k] = flat % shape[k];
        flat /= shape[k];
    }
    out
}

fn flatten(multi: &[usize], shape: &[usize]) -> usize {
    multi.iter().zip(shape).fold(0, |acc, (&i, &n)| acc * n + i)
}

/// Values on interior nodes at every time level, `components` per node.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    levels: usize,
    nodes: usize,
    components: usize,
    data: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Grid, components: usize) -> Self {
        Self::filled(grid, components, 0.0)
    }

    pub fn filled(grid: &Grid, components: usize, value: f64) -> Self {
        let levels = grid.levels();
        let nodes = grid.n_interior();
        Self {
            levels,
            nodes,
            components,
            data: vec![value; levels * nodes * components],
        }
    }

    /// Builds a field by evaluating `f(t, x, out)` at every interior node.
    pub fn from_fn<F>(grid: &Grid, components: usize, mut f: F) -> Self
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let mut field = Self::zeros(grid, components);
        for level in 0..grid.levels() {
            let t = grid.time(level);
            for node in 0..grid.n_interior() {
                let x = grid.coords(node);
                f(t, &x, field.node_mut(level, node));
            }
        }
        field
    }

    pub fn from_vec(grid: &Grid, components: usize, data: Vec<f64>) -> Result<Self> {
        let expected = grid.levels() * grid.n_interior() * components;
        if data.len() != expected {
            return Err(Error::Shape {
                expected,
                found: data.len(),
            });
        }
        Ok(Self {
            levels: grid.levels(),
            nodes: grid.n_interior(),
            components,
            data,
        })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn offset(&self, level: usize, node: usize) -> usize {
        debug_assert!(level < self.levels && node < self.nodes);
        (level * self.nodes + node) * self.components
    }

    pub fn get(&self, level: usize, node: usize, component: usize) -> f64 {
        self.data[self.offset(level, node) + component]
    }

    pub fn set(&mut self, level: usize, node: usize, component: usize, value: f64) {
        let o = self.offset(level, node);
        self.data[o + component] = value;
    }

    pub fn node(&self, level: usize, node: usize) -> &[f64] {
        let o = self.offset(level, node);
        &self.data[o..o + self.components]
    }

    pub fn node_mut(&mut self, level: usize, node: usize) -> &mut [f64] {
        let o = self.offset(level, node);
        &mut self.data[o..o + self.components]
    }

    pub fn level(&self, level: usize) -> &[f64] {
        let n = self.nodes * self.components;
        &self.data[level * n..(level + 1) * n]
    }

    pub fn level_mut(&mut self, level: usize) -> &mut [f64] {
        let n = self.nodes * self.components;
        &mut self.data[level * n..(level + 1) * n]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &Field) -> bool {
        self.levels == other.levels
            && self.nodes == other.nodes
            && self.components == other.components
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest absolute entry over levels `0..nt` (the terminal level excluded).
    pub fn max_abs_before_terminal(&self) -> f64 {
        let n = self.nodes * self.components;
        self.data[..(self.levels - 1) * n]
            .iter()
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `self + alpha * other`, elementwise.
    pub fn axpy(&self, alpha: f64, other: &Field) -> Field {
        debug_assert!(self.same_shape(other));
        let mut out = self.clone();
        for (o, v) in out.data.iter_mut().zip(&other.data) {
            *o += alpha * v;
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Scalar field with explicit lateral-boundary storage, as used for value
/// functions.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueField {
    interior: Field,
    boundary: Option<Vec<f64>>,
    n_boundary: usize,
}

impl ValueField {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            interior: Field::zeros(grid, 1),
            boundary: Some(vec![0.0; grid.levels() * grid.n_boundary()]),
            n_boundary: grid.n_boundary(),
        }
    }

    /// Wraps interior values only; stencils touching the boundary will fail.
    pub fn without_boundary(grid: &Grid, interior: Field) -> Result<Self> {
        if interior.components() != 1 || interior.nodes() != grid.n_interior() {
            return Err(Error::Shape {
                expected: grid.n_interior(),
                found: interior.nodes() * interior.components(),
            });
        }
        Ok(Self {
            interior,
            boundary: None,
            n_boundary: grid.n_boundary(),
        })
    }

    pub fn from_parts(grid: &Grid, interior: Field, boundary: Vec<f64>) -> Result<Self> {
        let expected = grid.levels() * grid.n_boundary();
        if boundary.len() != expected {
            return Err(Error::Shape {
                expected,
                found: boundary.len(),
            });
        }
        let mut v = Self::without_boundary(grid, interior)?;
        v.boundary = Some(boundary);
        Ok(v)
    }

    /// Evaluates `f(t, x)` at every interior and boundary node.
    pub fn from_fn<F: FnMut(f64, &[f64]) -> f64>(grid: &Grid, mut f: F) -> Self {
        let mut v = Self::zeros(grid);
        for level in 0..grid.levels() {
            let t = grid.time(level);
            for node in 0..grid.n_interior() {
                v.set_interior(level, node, f(t, &grid.coords(node)));
            }
            for ring in 0..grid.n_boundary() {
                v.set_boundary(level, ring, f(t, &grid.boundary_coords(ring)));
            }
        }
        v
    }

    pub fn interior(&self) -> &Field {
        &self.interior
    }

    pub fn interior_mut(&mut self) -> &mut Field {
        &mut self.interior
    }

    pub fn has_boundary(&self) -> bool {
        self.boundary.is_some()
    }

    pub fn get(&self, level: usize, node: usize) -> f64 {
        self.interior.get(level, node, 0)
    }

    pub fn set_interior(&mut self, level: usize, node: usize, value: f64) {
        self.interior.set(level, node, 0, value);
    }

    pub fn boundary_value(&self, level: usize, ring: usize) -> Result<f64> {
        self.boundary
            .as_ref()
            .map(|b| b[level * self.n_boundary + ring])
            .ok_or(Error::MissingBoundary)
    }

    pub fn set_boundary(&mut self, level: usize, ring: usize, value: f64) {
        let n = self.n_boundary;
        if let Some(b) = self.boundary.as_mut() {
            b[level * n + ring] = value;
        }
    }

    pub fn boundary_level(&self, level: usize) -> Option<&[f64]> {
        let n = self.n_boundary;
        self.boundary
            .as_ref()
            .map(|b| &b[level * n..(level + 1) * n])
    }

    pub fn at(&self, level: usize, node: Node) -> Result<f64> {
        match node {
            Node::Interior(i) => Ok(self.get(level, i)),
            Node::Boundary(r) => self.boundary_value(level, r),
        }
    }

    /// Elementwise difference, boundary included when both carry it.
    pub fn sub(&self, other: &ValueField) -> ValueField {
        let interior = self.interior.axpy(-1.0, &other.interior);
        let boundary = match (&self.boundary, &other.boundary) {
            (Some(a), Some(b)) => Some(a.iter().zip(b).map(|(x, y)| x - y).collect()),
            _ => None,
        };
        ValueField {
            interior,
            boundary,
            n_boundary: self.n_boundary,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.interior.is_finite()
            && self
                .boundary
                .as_ref()
                .is_none_or(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Central-difference gradient at interior nodes. Neighbours on the lateral
/// boundary contribute their stored boundary values.
pub fn spatial_gradient(v: &ValueField, grid: &Grid) -> Result<Field> {
    let d = grid.dim();
    let mut out = Field::zeros(grid, d);
    for level in 0..grid.levels() {
        spatial_gradient_level(v, grid, level, out.level_mut(level))?;
    }
    Ok(out)
}

/// Gradient at one time level, written into `out` (`n_interior * dim` values).
pub fn spatial_gradient_level(
    v: &ValueField,
    grid: &Grid,
    level: usize,
    out: &mut [f64],
) -> Result<()> {
    let d = grid.dim();
    for node in 0..grid.n_interior() {
        for axis in 0..d {
            let fwd = v.at(level, grid.neighbor(node, axis, true))?;
            let bwd = v.at(level, grid.neighbor(node, axis, false))?;
            out[node * d + axis] = (fwd - bwd) / (2.0 * grid.dx()[axis]);
        }
    }
    Ok(())
}

fn fmt_value(v: f64) -> String {
    format!("{v:.16e}")
}

fn header(dim: usize, components: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=dim).map(|k| format!("x{k}")));
    cols.extend((0..components).map(|c| format!("c{c}")));
    cols.join(",")
}

/// Writes an interior field as CSV: `t,x1[,x2],c0[,c1,...]`, one row per node.
pub fn write_field_csv<W: Write>(grid: &Grid, field: &Field, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{}", header(grid.dim(), field.components()))?;
    for level in 0..field.levels() {
        let t = fmt_value(grid.time(level));
        for node in 0..field.nodes() {
            let mut row = vec![t.clone()];
            row.extend(grid.coords(node).into_iter().map(fmt_value));
            row.extend(field.node(level, node).iter().copied().map(fmt_value));
            writeln!(w, "{}", row.join(","))?;
        }
    }
    Ok(())
}

/// Writes a value field over the extended lattice (boundary rows included).
pub fn write_value_csv<W: Write>(grid: &Grid, v: &ValueField, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{}", header(grid.dim(), 1))?;
    for level in 0..grid.levels() {
        let t = fmt_value(grid.time(level));
        for node in grid.extended_nodes() {
            let value = v.at(level, node).unwrap_or(f64::NAN);
            let mut row = vec![t.clone()];
            row.extend(grid.node_coords(node).into_iter().map(fmt_value));
            row.push(fmt_value(value));
            writeln!(w, "{}", row.join(","))?;
        }
    }
    Ok(())
}

fn parse_rows<R: BufRead>(r: R, dim: usize) -> Result<(usize, Vec<Vec<f64>>)> {
    let mut lines = r.lines();
    let head = lines
        .next()
        .ok_or_else(|| Error::Parse("empty input".into()))?
        .map_err(|e| Error::Parse(e.to_string()))?;
    let cols: Vec<&str> = head.trim().split(',').collect();
    if cols.len() < 2 + dim || cols[0] != "t" {
        return Err(Error::Parse(format!("unexpected header `{head}`")));
    }
    for k in 0..dim {
        if cols[1 + k] != format!("x{}", k + 1) {
            return Err(Error::Parse(format!("unexpected header `{head}`")));
        }
    }
    let components = cols.len() - 1 - dim;
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::Parse(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| Error::Parse(format!("row {}: {e}", i + 2)))?;
        if row.len() != cols.len() {
            return Err(Error::Parse(format!("row {}: wrong column count", i + 2)));
        }
        rows.push(row);
    }
    Ok((components, rows))
}

/// Reads back a field written by [`write_field_csv`] on the same grid.
pub fn read_field_csv<R: BufRead>(grid: &Grid, r: R) -> Result<Field> {
    let d = grid.dim();
    let (components, rows) = parse_rows(r, d)?;
    let expected = grid.levels() * grid.n_interior();
    if rows.len() != expected {
        return Err(Error::Shape {
            expected,
            found: rows.len(),
        });
    }
    let data = rows.iter().flat_map(|row| row[1 + d..].to_vec()).collect();
    Field::from_vec(grid, components, data)
}

/// Reads back a value field written by [`write_value_csv`] on the same grid.
pub fn read_value_csv<R: BufRead>(grid: &Grid, r: R) -> Result<ValueField> {
    let d = grid.dim();
    let (components, rows) = parse_rows(r, d)?;
    if components != 1 {
        return Err(Error::Parse("value dumps carry one component".into()));
    }
    let per_level = grid.n_interior() + grid.n_boundary();
    if rows.len() != grid.levels() * per_level {
        return Err(Error::Shape {
            expected: grid.levels() * per_level,
            found: rows.len(),
        });
    }
    let mut v = ValueField::zeros(grid);
    let nodes: Vec<Node> = grid.extended_nodes().collect();
    for level in 0..grid.levels() {
        for (k, node) in nodes.iter().enumerate() {
            let value = rows[level * per_level + k][1 + d];
            match *node {
                Node::Interior(i) => v.set_interior(level, i, value),
                Node::Boundary(b) => v.set_boundary(level, b, value),
            }
        }
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn interval_nodes_and_step() {
        let g = build_grid(GridSpec::interval(0.0, PI, 3, 2, 1.0)).unwrap();
        assert_eq!(g.n_interior(), 3);
        assert!((g.dx()[0] - PI / 4.0).abs() < 1e-15);
        let xs: Vec<f64> = (0..3).map(|i| g.coords(i)[0]).collect();
        for (x, want) in xs.iter().zip([PI / 4.0, PI / 2.0, 3.0 * PI / 4.0]) {
            assert!((x - want).abs() < 1e-15);
        }
        assert_eq!(g.n_boundary(), 2);
        assert_eq!(g.boundary_coords(0), vec![0.0]);
        assert_eq!(g.boundary_coords(1), vec![PI]);
    }

    #[test]
    fn box_counts() {
        let g = build_grid(GridSpec::new(
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![4, 5],
            2,
            1.0,
        ))
        .unwrap();
        assert_eq!(g.n_interior(), 20);
        assert_eq!(g.n_boundary(), 6 * 7 - 20);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(build_grid(GridSpec::interval(0.0, 1.0, 2, 2, 1.0)).is_err());
        assert!(build_grid(GridSpec::interval(0.0, f64::NAN, 5, 2, 1.0)).is_err());
        assert!(build_grid(GridSpec::interval(1.0, 0.0, 5, 2, 1.0)).is_err());
        assert!(build_grid(GridSpec::interval(0.0, 1.0, 5, 1, 1.0)).is_err());
        assert!(build_grid(GridSpec::interval(0.0, 1.0, 5, 4, 0.0)).is_err());
    }

    #[test]
    fn parabolic_boundary() {
        let g = build_grid(GridSpec::interval(0.0, 1.0, 3, 4, 1.0)).unwrap();
        assert!(g.on_parabolic_boundary(0, Node::Boundary(0)));
        assert!(!g.on_parabolic_boundary(0, Node::Interior(1)));
        assert!(g.on_parabolic_boundary(4, Node::Interior(1)));
    }

    #[test]
    fn neighbours_2d() {
        let g = build_grid(GridSpec::new(
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![3, 4],
            2,
            1.0,
        ))
        .unwrap();
        // node (1,2) -> flat 6
        assert_eq!(g.neighbor(6, 0, true), Node::Interior(10));
        assert_eq!(g.neighbor(6, 1, false), Node::Interior(5));
        assert!(matches!(g.neighbor(0, 0, false), Node::Boundary(_)));
        if let Node::Boundary(r) = g.neighbor(0, 1, false) {
            let x = g.boundary_coords(r);
            assert!((x[0] - 0.25).abs() < 1e-15 && x[1] == 0.0);
        }
    }

    #[test]
    fn gradient_of_constant_and_linear() {
        let g = build_grid(GridSpec::new(
            vec![0.0, -1.0],
            vec![2.0, 1.0],
            vec![5, 6],
            3,
            1.0,
        ))
        .unwrap();
        let c = ValueField::from_fn(&g, |_, _| 3.5);
        assert_eq!(spatial_gradient(&c, &g).unwrap().max_abs(), 0.0);
        let lin = ValueField::from_fn(&g, |t, x| 2.0 * x[0] - 0.5 * x[1] + t);
        let grad = spatial_gradient(&lin, &g).unwrap();
        for level in 0..g.levels() {
            for node in 0..g.n_interior() {
                assert!((grad.get(level, node, 0) - 2.0).abs() < 1e-12);
                assert!((grad.get(level, node, 1) + 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradient_needs_boundary() {
        let g = build_grid(GridSpec::interval(0.0, 1.0, 4, 2, 1.0)).unwrap();
        let v = ValueField::without_boundary(&g, Field::zeros(&g, 1)).unwrap();
        assert_eq!(spatial_gradient(&v, &g), Err(Error::MissingBoundary));
    }

    #[test]
    fn sin_gradient_taylor_bound() {
        let n = 99;
        let g = build_grid(GridSpec::interval(0.0, PI, n, 2, 1.0)).unwrap();
        let dx = g.dx()[0];
        assert!((dx - PI / 100.0).abs() < 1e-15);
        let v = ValueField::from_fn(&g, |_, x| x[0].sin());
        let grad = spatial_gradient(&v, &g).unwrap();
        let err = (0..n)
            .map(|i| (grad.get(0, i, 0) - g.coords(i)[0].cos()).abs())
            .fold(0.0, f64::max);
        assert!(err <= dx * dx / 6.0 * 1.01, "err {err}");
    }

    #[test]
    fn sin_gradient_second_order() {
        let err = |n: usize| {
            let g = build_grid(GridSpec::interval(0.0, PI, n, 2, 1.0)).unwrap();
            let v = ValueField::from_fn(&g, |_, x| x[0].sin());
            let grad = spatial_gradient(&v, &g).unwrap();
            (0..n)
                .map(|i| (grad.get(0, i, 0) - g.coords(i)[0].cos()).abs())
                .fold(0.0, f64::max)
        };
        // dx = pi/50 -> pi/100
        let ratio = err(49) / err(99);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn interpolation_reproduces_affine() {
        let g = build_grid(GridSpec::new(
            vec![0.0, 0.0],
            vec![1.0, 2.0],
            vec![4, 6],
            2,
            1.0,
        ))
        .unwrap();
        let f = |x: &[f64]| 1.0 + 2.0 * x[0] - x[1];
        let x = [0.37, 1.21];
        let v: f64 = g
            .interpolation_stencil(&x)
            .iter()
            .map(|&(i, w)| w * f(&g.coords(i)))
            .sum();
        assert!((v - f(&x)).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let g = build_grid(GridSpec::new(
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![3, 3],
            2,
            0.7,
        ))
        .unwrap();
        let f = Field::from_fn(&g, 2, |t, x, out| {
            out[0] = (t + x[0]).sin() / 3.0;
            out[1] = x[1].exp();
        });
        let mut buf = Vec::new();
        write_field_csv(&g, &f, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,x1,x2,c0,c1\n"));
        let back = read_field_csv(&g, buf.as_slice()).unwrap();
        assert_eq!(back, f);

        let v = ValueField::from_fn(&g, |t, x| t * x[0] + 1.0 / 3.0 + x[1]);
        let mut buf = Vec::new();
        write_value_csv(&g, &v, &mut buf).unwrap();
        let back = read_value_csv(&g, buf.as_slice()).unwrap();
        assert_eq!(back, v);
    }
}
