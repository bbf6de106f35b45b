//! Snapshot data: state pairs, quadrature weights, batching and the CSV format.
//!
//! The CSV header is `x1,...,xd,y1,...,yd[,w][,batch]`. Without a `batch`
//! column every row is one snapshot pair. With it, rows sharing a batch id
//! form one batched state: they must carry the same `x` and weight, and each
//! row contributes one realization `y` in file order. Values are written
//! with 17 significant digits so a write/read cycle is lossless.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use faer::Mat;

use crate::{Error, Result};

/// Unbatched snapshot pairs `(x_m, y_m)` with quadrature weights.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotSet {
    states_x: Mat<f64>,
    states_y: Mat<f64>,
    weights: Vec<f64>,
}

/// Snapshot data with `M2` independent one-step realizations per state.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchedSnapshotSet {
    states_x: Mat<f64>,
    realizations: Vec<Mat<f64>>,
    weights: Vec<f64>,
}

/// Either representation, as read from a snapshot CSV.
#[derive(Clone, Debug, PartialEq)]
pub enum SnapshotData {
    Unbatched(SnapshotSet),
    Batched(BatchedSnapshotSet),
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::domain("weights must be finite and nonnegative"));
    }
    if !weights.iter().any(|w| *w > 0.0) {
        return Err(Error::domain("at least one weight must be positive"));
    }
    Ok(())
}

impl SnapshotSet {
    pub fn new(states_x: Mat<f64>, states_y: Mat<f64>, weights: Vec<f64>) -> Result<Self> {
        let m = states_x.nrows();
        if m == 0 {
            return Err(Error::domain("snapshot set needs at least one row"));
        }
        if states_y.nrows() != m || weights.len() != m {
            return Err(Error::Schema(format!(
                "row counts differ: x {m}, y {}, weights {}",
                states_y.nrows(),
                weights.len()
            )));
        }
        if states_x.ncols() != states_y.ncols() {
            return Err(Error::Schema(format!(
                "state dimension of x ({}) and y ({}) differ",
                states_x.ncols(),
                states_y.ncols()
            )));
        }
        check_weights(&weights)?;
        Ok(Self { states_x, states_y, weights })
    }

    /// Snapshot pairs with Monte Carlo weights `1/M`.
    pub fn with_uniform_weights(states_x: Mat<f64>, states_y: Mat<f64>) -> Result<Self> {
        let w = monte_carlo_weights(states_x.nrows())?;
        Self::new(states_x, states_y, w)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states_x.ncols()
    }

    pub fn states_x(&self) -> &Mat<f64> {
        &self.states_x
    }

    pub fn states_y(&self) -> &Mat<f64> {
        &self.states_y
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl BatchedSnapshotSet {
    pub fn new(states_x: Mat<f64>, realizations: Vec<Mat<f64>>, weights: Vec<f64>) -> Result<Self> {
        let m1 = states_x.nrows();
        if m1 == 0 {
            return Err(Error::domain("batched set needs at least one state"));
        }
        if realizations.is_empty() {
            return Err(Error::domain("batched set needs at least one realization"));
        }
        for (k, r) in realizations.iter().enumerate() {
            if r.nrows() != m1 || r.ncols() != states_x.ncols() {
                return Err(Error::Schema(format!(
                    "realization {k} has shape {}x{}, expected {m1}x{}",
                    r.nrows(),
                    r.ncols(),
                    states_x.ncols()
                )));
            }
        }
        if weights.len() != m1 {
            return Err(Error::Schema(format!(
                "{} weights for {m1} states",
                weights.len()
            )));
        }
        check_weights(&weights)?;
        Ok(Self { states_x, realizations, weights })
    }

    /// Number of distinct states `M1`.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Realizations per state `M2`.
    pub fn realization_count(&self) -> usize {
        self.realizations.len()
    }

    pub fn dim(&self) -> usize {
        self.states_x.ncols()
    }

    pub fn states_x(&self) -> &Mat<f64> {
        &self.states_x
    }

    pub fn realizations(&self) -> &[Mat<f64>] {
        &self.realizations
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Unbatched view: every realization becomes its own pair, carrying
    /// `w_j / M2` so the total weight is unchanged. Rows are ordered by state,
    /// then by realization.
    pub fn flatten(&self) -> SnapshotSet {
        let m1 = self.len();
        let m2 = self.realization_count();
        let d = self.dim();
        let x = Mat::from_fn(m1 * m2, d, |r, c| self.states_x[(r / m2, c)]);
        let y = Mat::from_fn(m1 * m2, d, |r, c| self.realizations[r % m2][(r / m2, c)]);
        let w = (0..m1 * m2).map(|r| self.weights[r / m2] / m2 as f64).collect();
        SnapshotSet { states_x: x, states_y: y, weights: w }
    }
}

/// Monte Carlo quadrature weights, all `1/M`.
pub fn monte_carlo_weights(m: usize) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::domain("weight count must be at least 1"));
    }
    Ok(vec![1.0 / m as f64; m])
}

/// Trapezoid weights for `M` equispaced nodes on a periodic domain.
pub fn periodic_trapezoid_weights(m: usize, domain_length: f64) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::domain("weight count must be at least 1"));
    }
    if !(domain_length > 0.0 && domain_length.is_finite()) {
        return Err(Error::domain(format!(
            "domain length must be positive, got {domain_length}"
        )));
    }
    Ok(vec![domain_length / m as f64; m])
}

// ---------------------------------------------------------------------------
// Binning
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub enum BinningMode {
    /// Regular grid over the bounding box of the states, `bins[i]` cells along
    /// dimension `i`. Representative: cell center.
    Grid { bins: Vec<usize> },
    /// Assign each state to its nearest centroid (rows of the matrix).
    /// Representative: weighted mean of the members.
    NearestCentroid { centroids: Mat<f64> },
    /// Group states with bit-identical coordinates. Representative: the state.
    Exact,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinningSpec {
    pub mode: BinningMode,
    pub min_occupancy: usize,
}

impl BinningSpec {
    fn validate(&self, dim: usize) -> Result<()> {
        if self.min_occupancy < 2 {
            return Err(Error::domain("min_occupancy must be at least 2"));
        }
        match &self.mode {
            BinningMode::Grid { bins } => {
                if bins.len() != dim {
                    return Err(Error::domain(format!(
                        "grid binning has {} resolutions for dimension {dim}",
                        bins.len()
                    )));
                }
                if bins.contains(&0) {
                    return Err(Error::domain("grid resolution must be positive"));
                }
            }
            BinningMode::NearestCentroid { centroids } => {
                if centroids.nrows() == 0 || centroids.ncols() != dim {
                    return Err(Error::domain("centroid list must be nonempty with matching dimension"));
                }
            }
            BinningMode::Exact => {}
        }
        Ok(())
    }
}

struct Bin {
    members: Vec<usize>,
    weight: f64,
    cell: Option<Vec<usize>>,
}

/// Regroup unbatched samples into batches of realizations sharing a
/// representative state.
///
/// Bins are ordered by first appearance in the input. Bins with fewer than
/// `min_occupancy` members are dropped; the rest are truncated to the
/// smallest retained occupancy (first members in input order). Each batch
/// weight is the summed weight of its bin, rescaled so the retained batches
/// carry the total input weight.
pub fn bin_to_batched(data: &SnapshotSet, spec: &BinningSpec) -> Result<BatchedSnapshotSet> {
    let d = data.dim();
    spec.validate(d)?;
    let x = data.states_x();
    let m = data.len();

    let mut bins: Vec<Bin> = Vec::new();
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();

    let (lo, width) = bounding_cells(x, &spec.mode);
    for row in 0..m {
        let (key, cell) = match &spec.mode {
            BinningMode::Grid { bins: counts } => {
                let cell: Vec<usize> = (0..d)
                    .map(|c| {
                        if width[c] == 0.0 {
                            0
                        } else {
                            let t = ((x[(row, c)] - lo[c]) / width[c]).floor();
                            (t.max(0.0) as usize).min(counts[c] - 1)
                        }
                    })
                    .collect();
                (cell.iter().map(|&i| i as u64).collect::<Vec<_>>(), Some(cell))
            }
            BinningMode::NearestCentroid { centroids } => {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for k in 0..centroids.nrows() {
                    let dist: f64 = (0..d).map(|c| (x[(row, c)] - centroids[(k, c)]).powi(2)).sum();
                    if dist < best_d {
                        best_d = dist;
                        best = k;
                    }
                }
                (vec![best as u64], None)
            }
            BinningMode::Exact => ((0..d).map(|c| x[(row, c)].to_bits()).collect(), None),
        };
        let slot = *index.entry(key).or_insert_with(|| {
            bins.push(Bin { members: Vec::new(), weight: 0.0, cell });
            bins.len() - 1
        });
        bins[slot].members.push(row);
        bins[slot].weight += data.weights()[row];
    }

    let total: f64 = data.weights().iter().sum();
    let kept: Vec<&Bin> = bins
        .iter()
        .filter(|b| b.members.len() >= spec.min_occupancy)
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyResult(format!(
            "no bin reaches min_occupancy {}",
            spec.min_occupancy
        )));
    }
    let kept_weight: f64 = kept.iter().map(|b| b.weight).sum();
    if kept_weight <= 0.0 {
        return Err(Error::domain("retained bins carry zero total weight"));
    }
    let m2 = kept.iter().map(|b| b.members.len()).min().unwrap_or(0);
    let scale = total / kept_weight;

    let m1 = kept.len();
    let states_x = Mat::from_fn(m1, d, |b, c| {
        let bin = kept[b];
        match &spec.mode {
            BinningMode::Grid { .. } => {
                let cell = bin.cell.as_ref().expect("grid bins carry a cell");
                if width[c] == 0.0 {
                    lo[c]
                } else {
                    lo[c] + (cell[c] as f64 + 0.5) * width[c]
                }
            }
            BinningMode::NearestCentroid { .. } => {
                let wsum: f64 = bin.members.iter().map(|&r| data.weights()[r]).sum();
                if wsum > 0.0 {
                    bin.members.iter().map(|&r| data.weights()[r] * x[(r, c)]).sum::<f64>() / wsum
                } else {
                    bin.members.iter().map(|&r| x[(r, c)]).sum::<f64>() / bin.members.len() as f64
                }
            }
            BinningMode::Exact => x[(bin.members[0], c)],
        }
    });
    let realizations = (0..m2)
        .map(|k| Mat::from_fn(m1, d, |b, c| data.states_y()[(kept[b].members[k], c)]))
        .collect();
    let weights = kept.iter().map(|b| b.weight * scale).collect();
    BatchedSnapshotSet::new(states_x, realizations, weights)
}

fn bounding_cells(x: &Mat<f64>, mode: &BinningMode) -> (Vec<f64>, Vec<f64>) {
    let BinningMode::Grid { bins } = mode else {
        return (Vec::new(), Vec::new());
    };
    let d = x.ncols();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for r in 0..x.nrows() {
        for c in 0..d {
            lo[c] = lo[c].min(x[(r, c)]);
            hi[c] = hi[c].max(x[(r, c)]);
        }
    }
    let width = (0..d).map(|c| (hi[c] - lo[c]) / bins[c] as f64).collect();
    (lo, width)
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Column mapping of a snapshot CSV, parsed from its header.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CsvSchema {
    pub x_cols: Vec<usize>,
    pub y_cols: Vec<usize>,
    pub weight_col: Option<usize>,
    pub batch_col: Option<usize>,
    pub width: usize,
}

impl CsvSchema {
    pub fn from_header(header: &str) -> Result<Self> {
        let names: Vec<&str> = header.trim().split(',').map(str::trim).collect();
        let mut xs: Vec<(usize, usize)> = Vec::new();
        let mut ys: Vec<(usize, usize)> = Vec::new();
        let mut weight_col = None;
        let mut batch_col = None;
        for (col, name) in names.iter().enumerate() {
            match *name {
                "w" => weight_col = Some(col),
                "batch" => batch_col = Some(col),
                _ => {
                    let (prefix, rest) = name.split_at(1.min(name.len()));
                    let idx: usize = rest.parse().map_err(|_| {
                        Error::Schema(format!("unrecognized column `{name}`"))
                    })?;
                    match prefix {
                        "x" => xs.push((idx, col)),
                        "y" => ys.push((idx, col)),
                        _ => return Err(Error::Schema(format!("unrecognized column `{name}`"))),
                    }
                }
            }
        }
        xs.sort_unstable();
        ys.sort_unstable();
        let contiguous = |v: &[(usize, usize)]| v.iter().enumerate().all(|(i, (k, _))| *k == i + 1);
        if xs.is_empty() || !contiguous(&xs) || !contiguous(&ys) {
            return Err(Error::Schema("state columns must be x1..xd and y1..yd".into()));
        }
        if xs.len() != ys.len() {
            return Err(Error::Schema(format!(
                "x block has dimension {} but y block has dimension {}",
                xs.len(),
                ys.len()
            )));
        }
        Ok(Self {
            x_cols: xs.into_iter().map(|(_, c)| c).collect(),
            y_cols: ys.into_iter().map(|(_, c)| c).collect(),
            weight_col,
            batch_col,
            width: names.len(),
        })
    }

    pub fn dim(&self) -> usize {
        self.x_cols.len()
    }
}

struct Row {
    x: Vec<f64>,
    y: Vec<f64>,
    w: Option<f64>,
    batch: Option<u64>,
}

fn parse_rows<R: BufRead>(reader: R) -> Result<(CsvSchema, Vec<Row>)> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 1, msg: "missing header".into() })??;
    let schema = CsvSchema::from_header(&header)?;
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != schema.width {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected {} fields, found {}", schema.width, fields.len()),
            });
        }
        let num = |col: usize| -> Result<f64> {
            fields[col].parse::<f64>().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("invalid number `{}`", fields[col]),
            })
        };
        let x = schema.x_cols.iter().map(|&c| num(c)).collect::<Result<Vec<_>>>()?;
        let y = schema.y_cols.iter().map(|&c| num(c)).collect::<Result<Vec<_>>>()?;
        let w = schema.weight_col.map(num).transpose()?;
        let batch = schema
            .batch_col
            .map(|c| {
                fields[c].parse::<u64>().map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("batch id must be a nonnegative integer, got `{}`", fields[c]),
                })
            })
            .transpose()?;
        rows.push(Row { x, y, w, batch });
    }
    if rows.is_empty() {
        return Err(Error::Parse { line: 2, msg: "no data rows".into() });
    }
    Ok((schema, rows))
}

/// Parse a snapshot CSV into whichever representation its header declares.
pub fn read_snapshots<R: BufRead>(reader: R) -> Result<SnapshotData> {
    let (schema, rows) = parse_rows(reader)?;
    let d = schema.dim();
    if schema.batch_col.is_none() {
        let m = rows.len();
        let x = Mat::from_fn(m, d, |r, c| rows[r].x[c]);
        let y = Mat::from_fn(m, d, |r, c| rows[r].y[c]);
        let w = if schema.weight_col.is_some() {
            rows.iter().map(|r| r.w.unwrap_or(0.0)).collect()
        } else {
            monte_carlo_weights(m)?
        };
        return Ok(SnapshotData::Unbatched(SnapshotSet::new(x, y, w)?));
    }

    let mut order: Vec<u64> = Vec::new();
    let mut groups: HashMap<u64, Vec<usize>> = HashMap::new();
    for (i, row) in rows.iter().enumerate() {
        let id = row.batch.expect("batch column present");
        groups
            .entry(id)
            .or_insert_with(|| {
                order.push(id);
                Vec::new()
            })
            .push(i);
    }
    let m2 = groups[&order[0]].len();
    for id in &order {
        let members = &groups[id];
        if members.len() != m2 {
            return Err(Error::Schema(format!(
                "batch {id} has {} realizations, batch {} has {m2}; batches must be uniform",
                members.len(),
                order[0]
            )));
        }
        let first = &rows[members[0]];
        for &i in &members[1..] {
            if rows[i].x != first.x {
                return Err(Error::Schema(format!("batch {id} mixes different x states")));
            }
            if rows[i].w != first.w {
                return Err(Error::Schema(format!("batch {id} has inconsistent weights")));
            }
        }
    }
    let m1 = order.len();
    let first_of = |b: usize| &rows[groups[&order[b]][0]];
    let x = Mat::from_fn(m1, d, |b, c| first_of(b).x[c]);
    let realizations = (0..m2)
        .map(|k| Mat::from_fn(m1, d, |b, c| rows[groups[&order[b]][k]].y[c]))
        .collect();
    let w = if schema.weight_col.is_some() {
        (0..m1).map(|b| first_of(b).w.unwrap_or(0.0)).collect()
    } else {
        monte_carlo_weights(m1)?
    };
    Ok(SnapshotData::Batched(BatchedSnapshotSet::new(x, realizations, w)?))
}

/// Load a snapshot CSV from disk.
pub fn load_snapshots(path: impl AsRef<Path>) -> Result<SnapshotData> {
    let file = File::open(path)?;
    read_snapshots(BufReader::new(file))
}

fn header(d: usize, batched: bool) -> String {
    let mut cols: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    cols.extend((1..=d).map(|i| format!("y{i}")));
    cols.push("w".into());
    if batched {
        cols.push("batch".into());
    }
    cols.join(",")
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_snapshots<W: Write>(data: &SnapshotSet, out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    let d = data.dim();
    writeln!(out, "{}", header(d, false))?;
    for r in 0..data.len() {
        let mut fields: Vec<String> = (0..d).map(|c| fmt17(data.states_x[(r, c)])).collect();
        fields.extend((0..d).map(|c| fmt17(data.states_y[(r, c)])));
        fields.push(fmt17(data.weights[r]));
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_batched<W: Write>(data: &BatchedSnapshotSet, out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    let d = data.dim();
    writeln!(out, "{}", header(d, true))?;
    for b in 0..data.len() {
        let x: Vec<String> = (0..d).map(|c| fmt17(data.states_x[(b, c)])).collect();
        let w = fmt17(data.weights[b]);
        for real in &data.realizations {
            let mut fields = x.clone();
            fields.extend((0..d).map(|c| fmt17(real[(b, c)])));
            fields.push(w.clone());
            fields.push(b.to_string());
            writeln!(out, "{}", fields.join(","))?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_snapshot_data<W: Write>(data: &SnapshotData, out: W) -> Result<()> {
    match data {
        SnapshotData::Unbatched(s) => write_snapshots(s, out),
        SnapshotData::Batched(b) => write_batched(b, out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn read(text: &str) -> Result<SnapshotData> {
        read_snapshots(Cursor::new(text.as_bytes()))
    }

    fn unbatched(text: &str) -> SnapshotSet {
        match read(text).unwrap() {
            SnapshotData::Unbatched(s) => s,
            SnapshotData::Batched(_) => panic!("expected unbatched"),
        }
    }

    #[test]
    fn missing_weight_column_defaults_to_uniform() {
        let s = unbatched("x1,y1\n0,1\n1,2\n2,3\n3,4\n");
        assert_eq!(s.weights(), &[0.25; 4]);
        assert_eq!(s.states_y()[(2, 0)], 3.0);
    }

    #[test]
    fn explicit_weights_preserved() {
        let s = unbatched("x1,y1,w\n0,1,0.1\n1,2,0.2\n2,3,0.3\n3,4,0.4\n");
        assert_eq!(s.weights(), &[0.1, 0.2, 0.3, 0.4]);
    }

    #[test]
    fn dimension_mismatch_is_schema_error() {
        let err = read("x1,x2,x3,y1,y2\n1,2,3,4,5\n").unwrap_err();
        assert!(matches!(err, Error::Schema(_)), "{err}");
    }

    #[test]
    fn malformed_row_reports_line() {
        let err = read("x1,y1\n0,1\n1,oops\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
        let err = read("x1,y1\n0,1,2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn batched_csv_groups_rows() {
        let text = "x1,y1,w,batch\n0.5,0.1,0.5,0\n0.5,0.2,0.5,0\n0.25,0.3,0.5,1\n0.25,0.4,0.5,1\n";
        let SnapshotData::Batched(b) = read(text).unwrap() else { panic!() };
        assert_eq!(b.len(), 2);
        assert_eq!(b.realization_count(), 2);
        assert_eq!(b.realizations()[1][(0, 0)], 0.2);
        assert_eq!(b.realizations()[0][(1, 0)], 0.3);
        let ragged = "x1,y1,batch\n0,1,0\n0,2,0\n1,3,1\n";
        assert!(matches!(read(ragged).unwrap_err(), Error::Schema(_)));
    }

    #[test]
    fn weight_helpers() {
        assert_eq!(monte_carlo_weights(4).unwrap(), vec![0.25; 4]);
        assert_eq!(monte_carlo_weights(1).unwrap(), vec![1.0]);
        let s: f64 = monte_carlo_weights(10).unwrap().iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
        assert!(monte_carlo_weights(0).is_err());

        let w = periodic_trapezoid_weights(100, 1.0).unwrap();
        assert!(w.iter().all(|&v| v == 0.01));
        let tau = 2.0 * std::f64::consts::PI;
        assert_eq!(periodic_trapezoid_weights(1, tau).unwrap(), vec![tau]);
        let s: f64 = periodic_trapezoid_weights(7, 3.5).unwrap().iter().sum();
        assert!((s - 3.5).abs() < 1e-14);
        assert!(periodic_trapezoid_weights(3, 0.0).is_err());
        assert!(periodic_trapezoid_weights(3, -1.0).is_err());
    }

    fn set(x: &[f64], y: &[f64], w: &[f64]) -> SnapshotSet {
        let m = x.len();
        SnapshotSet::new(
            Mat::from_fn(m, 1, |r, _| x[r]),
            Mat::from_fn(m, 1, |r, _| y[r]),
            w.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn binning_single_bin() {
        let data = set(&[0.3; 5], &[1.0, 2.0, 3.0, 4.0, 5.0], &[0.1, 0.2, 0.3, 0.2, 0.4]);
        let spec = BinningSpec { mode: BinningMode::Exact, min_occupancy: 2 };
        let b = bin_to_batched(&data, &spec).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b.realization_count(), 5);
        assert!((b.weights()[0] - 1.2).abs() < 1e-15);
        let grid = BinningSpec { mode: BinningMode::Grid { bins: vec![4] }, min_occupancy: 2 };
        let b = bin_to_batched(&data, &grid).unwrap();
        assert_eq!(b.realization_count(), 5);
        assert_eq!(b.states_x()[(0, 0)], 0.3);
    }

    #[test]
    fn binning_truncates_to_common_occupancy() {
        // x = 0 appears 3 times, x = 1 five times, interleaved.
        let x = [0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0];
        let y: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let data = set(&x, &y, &[0.125; 8]);
        let spec = BinningSpec { mode: BinningMode::Exact, min_occupancy: 2 };
        let b = bin_to_batched(&data, &spec).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(b.realization_count(), 3);
        assert_eq!(b.states_x()[(0, 0)], 0.0);
        assert_eq!(b.states_x()[(1, 0)], 1.0);
        // first three members of each bin in input order
        let ys0: Vec<f64> = (0..3).map(|k| b.realizations()[k][(0, 0)]).collect();
        let ys1: Vec<f64> = (0..3).map(|k| b.realizations()[k][(1, 0)]).collect();
        assert_eq!(ys0, vec![0.0, 3.0, 6.0]);
        assert_eq!(ys1, vec![1.0, 2.0, 4.0]);
        assert!((b.weights()[0] - 0.375).abs() < 1e-15);
        assert!((b.weights()[1] - 0.625).abs() < 1e-15);

        let grid = BinningSpec { mode: BinningMode::Grid { bins: vec![2] }, min_occupancy: 2 };
        let g = bin_to_batched(&data, &grid).unwrap();
        assert_eq!(g.realization_count(), 3);
        assert_eq!(g.states_x()[(0, 0)], 0.25);
        assert_eq!(g.states_x()[(1, 0)], 0.75);
    }

    #[test]
    fn binning_drops_sparse_bins_and_renormalizes() {
        let data = set(&[0.0, 0.0, 1.0, 2.0, 2.0], &[1.0; 5], &[0.1, 0.1, 0.5, 0.2, 0.1]);
        let spec = BinningSpec { mode: BinningMode::Exact, min_occupancy: 2 };
        let b = bin_to_batched(&data, &spec).unwrap();
        assert_eq!(b.len(), 2);
        let total: f64 = b.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert!((b.weights()[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn binning_all_unique_is_empty() {
        let data = set(&[0.0, 1.0, 2.0], &[0.0; 3], &[1.0; 3]);
        let spec = BinningSpec { mode: BinningMode::Exact, min_occupancy: 2 };
        assert!(matches!(bin_to_batched(&data, &spec), Err(Error::EmptyResult(_))));
        let bad = BinningSpec { mode: BinningMode::Exact, min_occupancy: 1 };
        assert!(bin_to_batched(&data, &bad).is_err());
    }

    #[test]
    fn centroid_binning_uses_weighted_mean() {
        let data = set(&[0.0, 0.2, 1.0, 1.2], &[0.0; 4], &[0.3, 0.1, 0.2, 0.2]);
        let centroids = Mat::from_fn(2, 1, |r, _| r as f64);
        let spec = BinningSpec { mode: BinningMode::NearestCentroid { centroids }, min_occupancy: 2 };
        let b = bin_to_batched(&data, &spec).unwrap();
        assert!((b.states_x()[(0, 0)] - 0.05).abs() < 1e-15);
        assert!((b.states_x()[(1, 0)] - 1.1).abs() < 1e-15);
    }

    #[test]
    fn flatten_then_exact_rebin_recovers_batches() {
        let x = Mat::from_fn(3, 2, |r, c| (r * 2 + c) as f64 * 0.1);
        let reals: Vec<Mat<f64>> = (0..4)
            .map(|k| Mat::from_fn(3, 2, |r, c| (k * 10 + r * 2 + c) as f64 * 0.01))
            .collect();
        let b = BatchedSnapshotSet::new(x, reals, vec![0.25, 0.25, 0.5]).unwrap();
        let flat = b.flatten();
        let spec = BinningSpec { mode: BinningMode::Exact, min_occupancy: 2 };
        let again = bin_to_batched(&flat, &spec).unwrap();
        assert_eq!(again.states_x(), b.states_x());
        assert_eq!(again.realizations(), b.realizations());
        for (a, e) in again.weights().iter().zip(b.weights()) {
            assert!((a - e).abs() < 1e-15);
        }
    }
}
