//! Elastic-row count sketch with coefficient-of-variation bucket merging.
//!
//! A gradient vector of dimension `n` is mapped into an `a x b` matrix by one
//! independent hash function per row. Colliding entries in a bucket are merged
//! by their mean when the bucket's coefficient of variation is small, and by
//! the entry of largest magnitude otherwise. Sketches from different parties
//! may use different row counts `a` but must share columns and hash family;
//! recovery is a per-coordinate median over the rows of an aggregated sketch.
//!
//! All row, column, and key indices in this module are zero-based.

use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};

pub(crate) const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub(crate) fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A seeded family of per-row hash functions mapping keys `0..n` to columns
/// `0..b`.
///
/// Each row uses its own sub-seed derived from the family seed, so rows are
/// mutually independent mappings. Construction is pure integer arithmetic and
/// produces identical mappings on every platform and process for equal
/// `(seed, n, b, max_rows)`.
#[derive(Debug, Clone)]
pub struct HashFamily {
    seed: u64,
    domain_size: usize,
    columns: usize,
    max_rows: usize,
    /// Explicit per-row mapping tables. When present they override the seeded
    /// mapping; the seed then only labels the family for compatibility checks.
    tables: Option<Vec<Vec<u32>>>,
}

impl HashFamily {
    /// Builds a seeded family. Positions are computed on the fly with
    /// multiply-shift hashing per row.
    pub fn new(seed: u64, domain_size: usize, columns: usize, max_rows: usize) -> Result<Self> {
        if domain_size == 0 || columns == 0 || max_rows == 0 {
            return Err(Error::invalid(format!(
                "hash family dimensions must be positive (n={domain_size}, b={columns}, max_rows={max_rows})"
            )));
        }
        Ok(HashFamily {
            seed,
            domain_size,
            columns,
            max_rows,
            tables: None,
        })
    }

    /// Builds a family from explicit per-row tables, one column index per key.
    ///
    /// Useful for pinned fixtures and for constructing injective (collision
    /// free) mappings. `seed` is a label carried for compatibility checks.
    pub fn from_tables(seed: u64, columns: usize, tables: Vec<Vec<u32>>) -> Result<Self> {
        if columns == 0 || tables.is_empty() {
            return Err(Error::invalid("explicit family needs columns and at least one row"));
        }
        let domain_size = tables[0].len();
        if domain_size == 0 {
            return Err(Error::invalid("explicit family needs a non-empty key domain"));
        }
        for (u, table) in tables.iter().enumerate() {
            if table.len() != domain_size {
                return Err(Error::invalid(format!(
                    "row {u} table has {} entries, expected {domain_size}",
                    table.len()
                )));
            }
            if let Some(&v) = table.iter().find(|&&v| v as usize >= columns) {
                return Err(Error::invalid(format!(
                    "row {u} maps a key to column {v}, but only {columns} columns exist"
                )));
            }
        }
        Ok(HashFamily {
            seed,
            domain_size,
            columns,
            max_rows: tables.len(),
            tables: Some(tables),
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Gradient dimension `n` this family hashes.
    pub fn domain_size(&self) -> usize {
        self.domain_size
    }

    /// Sketch width `b`.
    pub fn columns(&self) -> usize {
        self.columns
    }

    /// Largest row index any party may use, exclusive.
    pub fn max_rows(&self) -> usize {
        self.max_rows
    }

    /// Column of key `key` in row `row`. Errors when either index is out of
    /// range; the mapping itself is a pure function of the family.
    pub fn position(&self, row: usize, key: usize) -> Result<usize> {
        if row >= self.max_rows {
            return Err(Error::invalid(format!(
                "row {row} out of range (max_rows {})",
                self.max_rows
            )));
        }
        if key >= self.domain_size {
            return Err(Error::invalid(format!(
                "key {key} out of range (domain {})",
                self.domain_size
            )));
        }
        Ok(self.pos(row, key))
    }

    /// Infallible position for indices already known to be in range.
    fn pos(&self, row: usize, key: usize) -> usize {
        debug_assert!(row < self.max_rows && key < self.domain_size);
        if let Some(tables) = &self.tables {
            return tables[row][key] as usize;
        }
        let row_seed = splitmix64(self.seed ^ (row as u64 + 1).wrapping_mul(GOLDEN));
        let mult = splitmix64(row_seed) | 1;
        let add = splitmix64(row_seed ^ GOLDEN);
        let h = mult.wrapping_mul(key as u64 + 1).wrapping_add(add);
        // unbiased-enough range reduction without modulo
        ((h as u128 * self.columns as u128) >> 64) as usize
    }
}

/// Decides how colliding gradient entries in one bucket are merged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionPolicy {
    /// Coefficient-of-variation threshold below which a bucket is averaged.
    pub cv_threshold: f64,
}

impl CollisionPolicy {
    pub fn new(cv_threshold: f64) -> Result<Self> {
        if !(cv_threshold >= 0.0) {
            return Err(Error::invalid("cv_threshold must be non-negative"));
        }
        Ok(CollisionPolicy { cv_threshold })
    }
}

impl Default for CollisionPolicy {
    fn default() -> Self {
        CollisionPolicy { cv_threshold: 0.5 }
    }
}

/// A dense gradient vector with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector(Vec<f64>);

impl GradientVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((k, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!("gradient entry {k} is not finite ({v})")));
        }
        Ok(GradientVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Merges one non-empty collision bucket into a single cell value.
///
/// The coefficient of variation is the population standard deviation divided
/// by the absolute mean. Buckets at or below the threshold are averaged;
/// above it the entry of largest magnitude survives, sign preserved. A bucket
/// with zero mean but nonzero spread counts as infinitely dispersed, and a
/// bucket of equal values (any singleton) as perfectly concentrated. On
/// equal magnitudes the later entry wins, which keeps the selection stable
/// under uniform rescaling of the bucket.
pub fn merge_bucket(values: &[f64], policy: &CollisionPolicy) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("cannot merge an empty bucket"));
    }
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
    let std = var.sqrt();
    let cv = if std == 0.0 {
        0.0
    } else if mean == 0.0 {
        f64::INFINITY
    } else {
        std / mean.abs()
    };
    if cv <= policy.cv_threshold {
        Ok(mean)
    } else {
        let mut kept = values[0];
        for &v in &values[1..] {
            if v.abs() >= kept.abs() {
                kept = v;
            }
        }
        Ok(kept)
    }
}

/// A compressed gradient: `rows x cols` merged buckets plus the identity of
/// the hash family that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveSketch {
    rows: usize,
    cols: usize,
    cells: Vec<f64>,
    family_seed: u64,
}

impl AdaptiveSketch {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn family_seed(&self) -> u64 {
        self.family_seed
    }

    pub fn cell(&self, row: usize, col: usize) -> f64 {
        self.cells[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.cells[row * self.cols..(row + 1) * self.cols]
    }

    /// Row-major cell storage.
    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    /// Transmitted value-slot count `a * b`.
    pub fn volume_slots(&self) -> u64 {
        (self.rows * self.cols) as u64
    }

    /// Writes the textual dump: a `seed rows cols` header line followed by
    /// one space-separated line per row. Floats use shortest round-trip
    /// formatting, so equal sketches dump to identical bytes.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {} {}", self.family_seed, self.rows, self.cols)?;
        for u in 0..self.rows {
            let line: Vec<String> = self.row(u).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    /// Parses a dump produced by [`AdaptiveSketch::write_dump`].
    pub fn read_dump<R: Read>(r: R) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse { line: 1, msg: "empty dump".into() })??;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Parse { line: 1, msg: "expected `seed rows cols` header".into() });
        }
        let parse_usize = |s: &str, what: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Parse { line: 1, msg: format!("bad {what} `{s}`") })
        };
        let family_seed = fields[0]
            .parse::<u64>()
            .map_err(|_| Error::Parse { line: 1, msg: format!("bad seed `{}`", fields[0]) })?;
        let rows = parse_usize(fields[1], "row count")?;
        let cols = parse_usize(fields[2], "column count")?;
        if rows == 0 || cols == 0 {
            return Err(Error::Parse { line: 1, msg: "rows and cols must be positive".into() });
        }
        let mut cells = Vec::with_capacity(rows * cols);
        for u in 0..rows {
            let line_no = u + 2;
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse { line: line_no, msg: "missing row".into() })??;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::Parse { line: line_no, msg: format!("bad cell `{s}`") })
                })
                .collect::<Result<_>>()?;
            if row.len() != cols {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("expected {cols} cells, found {}", row.len()),
                });
            }
            cells.extend_from_slice(&row);
        }
        Ok(AdaptiveSketch { rows, cols, cells, family_seed })
    }
}

/// The server-side combination of unequal-height sketches: row-wise averaged
/// cells plus the number of contributors per row.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedSketch {
    rows: usize,
    cols: usize,
    cells: Vec<f64>,
    row_counts: Vec<u32>,
    family_seed: u64,
}

impl AggregatedSketch {
    pub fn new(
        rows: usize,
        cols: usize,
        cells: Vec<f64>,
        row_counts: Vec<u32>,
        family_seed: u64,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("aggregated sketch needs positive dimensions"));
        }
        if cells.len() != rows * cols {
            return Err(Error::invalid(format!(
                "cell storage {} does not match {rows}x{cols}",
                cells.len()
            )));
        }
        if row_counts.len() != rows {
            return Err(Error::invalid("one contributor count per row is required"));
        }
        if row_counts.contains(&0) {
            return Err(Error::invalid("every retained row needs at least one contributor"));
        }
        if cells.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("aggregated cells must be finite"));
        }
        Ok(AggregatedSketch { rows, cols, cells, row_counts, family_seed })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell(&self, row: usize, col: usize) -> f64 {
        self.cells[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.cells[row * self.cols..(row + 1) * self.cols]
    }

    /// Row-major cell storage.
    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    /// Contributor counts per row.
    pub fn row_counts(&self) -> &[u32] {
        &self.row_counts
    }

    pub fn family_seed(&self) -> u64 {
        self.family_seed
    }
}

/// Compresses a gradient into `rows` sketch rows using the family's hashes.
///
/// Every cell holds the merged value of its collision bucket, or zero when no
/// key maps there. Pure: equal inputs give bitwise-equal sketches.
pub fn compress(
    gradient: &GradientVector,
    rows: usize,
    family: &HashFamily,
    policy: &CollisionPolicy,
) -> Result<AdaptiveSketch> {
    if rows == 0 || rows > family.max_rows() {
        return Err(Error::invalid(format!(
            "row count {rows} outside [1, {}]",
            family.max_rows()
        )));
    }
    if gradient.len() != family.domain_size() {
        return Err(Error::invalid(format!(
            "gradient dimension {} does not match family domain {}",
            gradient.len(),
            family.domain_size()
        )));
    }
    let b = family.columns();
    let mut cells = vec![0.0; rows * b];
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); b];
    for u in 0..rows {
        for bucket in buckets.iter_mut() {
            bucket.clear();
        }
        for (k, &g_k) in gradient.values().iter().enumerate() {
            buckets[family.pos(u, k)].push(g_k);
        }
        for (v, bucket) in buckets.iter().enumerate() {
            if !bucket.is_empty() {
                cells[u * b + v] = merge_bucket(bucket, policy)?;
            }
        }
    }
    Ok(AdaptiveSketch { rows, cols: b, cells, family_seed: family.seed() })
}

/// Recovers a gradient estimate: coordinate `k` is the median over rows `u`
/// of the aggregated cell at `(u, position(u, k))`. An even row count takes
/// the mean of the two middle values.
pub fn decompress(agg: &AggregatedSketch, family: &HashFamily) -> Result<GradientVector> {
    if agg.cols() != family.columns() {
        return Err(Error::invalid(format!(
            "aggregate has {} columns, family expects {}",
            agg.cols(),
            family.columns()
        )));
    }
    if agg.rows() > family.max_rows() {
        return Err(Error::invalid(format!(
            "aggregate has {} rows, family allows at most {}",
            agg.rows(),
            family.max_rows()
        )));
    }
    if agg.family_seed() != family.seed() {
        return Err(Error::IncompatibleSketch(format!(
            "aggregate was built under family seed {}, not {}",
            agg.family_seed(),
            family.seed()
        )));
    }
    let n = family.domain_size();
    let mut out = Vec::with_capacity(n);
    let mut queried = Vec::with_capacity(agg.rows());
    for k in 0..n {
        queried.clear();
        for u in 0..agg.rows() {
            queried.push(agg.cell(u, family.pos(u, k)));
        }
        out.push(median(&mut queried));
    }
    GradientVector::new(out)
}

fn median(values: &mut [f64]) -> f64 {
    debug_assert!(!values.is_empty());
    values.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite cells"));
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    }
}

/// Sketch height for a transmittable volume of `volume_slots` values:
/// `volume / columns`, clamped into `[row_min, row_max]`.
pub fn rows_for_volume(
    volume_slots: u64,
    columns: usize,
    row_min: usize,
    row_max: usize,
) -> usize {
    assert!(columns > 0, "columns must be positive");
    assert!(row_min >= 1 && row_min <= row_max, "need 1 <= row_min <= row_max");
    let raw = (volume_slots / columns as u64) as usize;
    raw.clamp(row_min, row_max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture_family() -> HashFamily {
        // h0: keys {0,1,2} -> cols {0,1,0}; h1: -> {1,0,1}
        HashFamily::from_tables(9, 2, vec![vec![0, 1, 0], vec![1, 0, 1]]).unwrap()
    }

    #[test]
    fn seeded_family_is_deterministic() {
        let a = HashFamily::new(42, 10, 4, 3).unwrap();
        let b = HashFamily::new(42, 10, 4, 3).unwrap();
        for u in 0..3 {
            for k in 0..10 {
                assert_eq!(a.position(u, k).unwrap(), b.position(u, k).unwrap());
            }
        }
    }

    #[test]
    fn positions_stay_in_codomain() {
        let f = HashFamily::new(42, 10, 4, 3).unwrap();
        for u in 0..3 {
            for k in 0..10 {
                assert!(f.position(u, k).unwrap() < 4);
            }
        }
    }

    #[test]
    fn different_seeds_change_some_position() {
        let a = HashFamily::new(42, 10, 4, 3).unwrap();
        let b = HashFamily::new(43, 10, 4, 3).unwrap();
        let differs = (0..3)
            .flat_map(|u| (0..10).map(move |k| (u, k)))
            .any(|(u, k)| a.pos(u, k) != b.pos(u, k));
        assert!(differs);
    }

    #[test]
    fn seeded_fixture_table_is_frozen() {
        // recorded once; a change here breaks every previously written sketch
        let f = HashFamily::new(1, 3, 2, 2).unwrap();
        let table: Vec<Vec<usize>> =
            (0..2).map(|u| (0..3).map(|k| f.pos(u, k)).collect()).collect();
        assert_eq!(table, vec![vec![0, 1, 0], vec![0, 0, 1]]);
    }

    #[test]
    fn position_rejects_out_of_range() {
        let f = HashFamily::new(1, 3, 2, 2).unwrap();
        assert!(f.position(2, 0).is_err());
        assert!(f.position(0, 3).is_err());
    }

    #[test]
    fn preimages_partition_the_domain() {
        let f = HashFamily::new(7, 50, 8, 4).unwrap();
        for u in 0..4 {
            let mut seen = [false; 50];
            for v in 0..8 {
                for k in 0..50 {
                    if f.pos(u, k) == v {
                        assert!(!seen[k], "key {k} in two preimages");
                        seen[k] = true;
                    }
                }
            }
            assert!(seen.iter().all(|&s| s), "preimages must cover every key");
        }
    }

    #[test]
    fn rows_look_uniform_enough() {
        // loose chi-squared sanity, not a hard guarantee
        let n = 8192;
        let b = 64;
        let f = HashFamily::new(123, n, b, 4).unwrap();
        for u in 0..4 {
            let mut counts = vec![0usize; b];
            for k in 0..n {
                counts[f.pos(u, k)] += 1;
            }
            let expected = n as f64 / b as f64;
            let chi2: f64 = counts
                .iter()
                .map(|&c| {
                    let d = c as f64 - expected;
                    d * d / expected
                })
                .sum();
            // 63 dof; mean 63, std ~11. Allow a wide band.
            assert!(chi2 < 120.0, "row {u} chi2 {chi2} too large");
        }
    }

    #[test]
    fn merge_zero_variance_takes_mean() {
        let p = CollisionPolicy::default();
        assert_eq!(merge_bucket(&[2.0, 2.0, 2.0], &p).unwrap(), 2.0);
    }

    #[test]
    fn merge_at_threshold_takes_mean() {
        // mean 2, population std 1, cv exactly 0.5
        let p = CollisionPolicy::default();
        assert_eq!(merge_bucket(&[1.0, 3.0], &p).unwrap(), 2.0);
    }

    #[test]
    fn merge_above_threshold_keeps_dominant_entry() {
        // mean 5.5, std 4.5, cv ~0.818
        let p = CollisionPolicy::default();
        assert_eq!(merge_bucket(&[1.0, 10.0], &p).unwrap(), 10.0);
    }

    #[test]
    fn merge_singleton_is_identity() {
        let p = CollisionPolicy::default();
        assert_eq!(merge_bucket(&[-3.0], &p).unwrap(), -3.0);
    }

    #[test]
    fn merge_zero_mean_uses_magnitude() {
        let p = CollisionPolicy::default();
        assert_eq!(merge_bucket(&[-1.0, 1.0], &p).unwrap(), 1.0);
        assert_eq!(merge_bucket(&[-5.0, 2.0, 3.0], &p).unwrap(), -5.0);
    }

    #[test]
    fn merge_rejects_empty_bucket() {
        assert!(merge_bucket(&[], &CollisionPolicy::default()).is_err());
    }

    #[test]
    fn compress_zero_gradient_is_zero_sketch() {
        let f = HashFamily::new(5, 20, 4, 3).unwrap();
        let g = GradientVector::new(vec![0.0; 20]).unwrap();
        let s = compress(&g, 3, &f, &CollisionPolicy::default()).unwrap();
        assert!(s.cells().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn compress_matches_pinned_fixture() {
        let f = fixture_family();
        let g = GradientVector::new(vec![1.0, 2.0, 3.0]).unwrap();
        let s = compress(&g, 2, &f, &CollisionPolicy::default()).unwrap();
        assert_eq!(s.cells(), &[2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn compress_rejects_bad_dimensions() {
        let f = fixture_family();
        let g = GradientVector::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert!(compress(&g, 3, &f, &CollisionPolicy::default()).is_err());
        let short = GradientVector::new(vec![1.0]).unwrap();
        assert!(compress(&short, 2, &f, &CollisionPolicy::default()).is_err());
    }

    #[test]
    fn injective_rows_store_permutations() {
        let tables = vec![vec![2, 0, 1], vec![0, 1, 2]];
        let f = HashFamily::from_tables(3, 3, tables).unwrap();
        let g = GradientVector::new(vec![4.0, -1.0, 0.5]).unwrap();
        let s = compress(&g, 2, &f, &CollisionPolicy::default()).unwrap();
        let mut row0 = s.row(0).to_vec();
        row0.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(row0, vec![-1.0, 0.5, 4.0]);
        assert_eq!(s.row(1), &[4.0, -1.0, 0.5]);
    }

    #[test]
    fn decompress_zero_aggregate_is_zero() {
        let f = HashFamily::new(5, 20, 4, 3).unwrap();
        let agg = AggregatedSketch::new(3, 4, vec![0.0; 12], vec![1, 1, 1], 5).unwrap();
        let g = decompress(&agg, &f).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn decompress_matches_pinned_fixture() {
        // the compress fixture treated as a single-client aggregate
        let f = fixture_family();
        let agg =
            AggregatedSketch::new(2, 2, vec![2.0, 2.0, 2.0, 2.0], vec![1, 1], 9).unwrap();
        let g = decompress(&agg, &f).unwrap();
        assert_eq!(g.values(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn collision_free_roundtrip_is_exact() {
        let tables = vec![vec![2, 0, 1], vec![0, 1, 2], vec![1, 2, 0]];
        let f = HashFamily::from_tables(11, 3, tables).unwrap();
        let g = GradientVector::new(vec![0.25, -7.5, 3.0]).unwrap();
        let s = compress(&g, 3, &f, &CollisionPolicy::default()).unwrap();
        let agg =
            AggregatedSketch::new(3, 3, s.cells().to_vec(), vec![1, 1, 1], 11).unwrap();
        assert_eq!(decompress(&agg, &f).unwrap(), g);
    }

    #[test]
    fn decompress_rejects_mismatched_family() {
        let f = fixture_family();
        let wrong_cols = AggregatedSketch::new(2, 3, vec![0.0; 6], vec![1, 1], 9).unwrap();
        assert!(decompress(&wrong_cols, &f).is_err());
        let wrong_seed = AggregatedSketch::new(2, 2, vec![0.0; 4], vec![1, 1], 8).unwrap();
        assert!(matches!(decompress(&wrong_seed, &f), Err(Error::IncompatibleSketch(_))));
    }

    #[test]
    fn rows_for_volume_floors_and_clamps() {
        assert_eq!(rows_for_volume(1000, 100, 3, 10), 10);
        assert_eq!(rows_for_volume(100, 100, 3, 10), 3);
        assert_eq!(rows_for_volume(50_000, 100, 3, 10), 10);
        assert_eq!(rows_for_volume(0, 100, 3, 10), 3);
        assert_eq!(rows_for_volume(640, 64, 3, 10), 10);
        assert_eq!(rows_for_volume(639, 64, 3, 10), 9);
    }

    #[test]
    fn dump_roundtrip_and_golden_bytes() {
        let f = fixture_family();
        let g = GradientVector::new(vec![1.0, 2.0, 3.0]).unwrap();
        let s = compress(&g, 2, &f, &CollisionPolicy::default()).unwrap();
        let mut buf = Vec::new();
        s.write_dump(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "9 2 2\n2 2\n2 2\n");
        let back = AdaptiveSketch::read_dump(&buf[..]).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn dump_parse_errors_carry_line_numbers() {
        let err = AdaptiveSketch::read_dump("9 2 2\n1 2\nbad 4\n".as_bytes()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
