//! Field geometry, weed-probability maps and target selection.
//!
//! A [`WeedMap`] is a uniform grid of per-cell weed probabilities. A
//! [`FieldModel`] adds what the rover needs to know about the field itself:
//! crop-row direction, cells it may not enter (obstacles, headlands) and its
//! home cell. Cells are addressed by row-major index and use 4-connectivity.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Row-major cell index into a [`WeedMap`].
pub type CellIndex = usize;

/// Default probability cut used by [`select_targets`] callers.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("line {line}: value {value:?} is not a number")]
    MalformedValue { line: usize, value: String },
    #[error("expected {expected} probabilities, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("probability {value} at cell {cell} is outside [0, 1]")]
    ProbabilityOutOfRange { cell: CellIndex, value: f64 },
    #[error("invalid JSON map: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FieldError {
    #[error("cell {cell} is outside a field of {cells} cells")]
    CellOutOfRange { cell: CellIndex, cells: usize },
    #[error("home cell {0} is blocked")]
    HomeBlocked(CellIndex),
    #[error("threshold {0} is outside [0, 1]")]
    ThresholdOutOfRange(f64),
}

/// On-disk representation of a weed map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapFormat {
    GridCsv,
    GridJson,
}

impl MapFormat {
    /// Guess the format from a file extension, defaulting to CSV.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => MapFormat::GridJson,
            _ => MapFormat::GridCsv,
        }
    }
}

/// A uniform grid of weed probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWeedMap", into = "RawWeedMap")]
pub struct WeedMap {
    width: usize,
    height: usize,
    cell_size: f64,
    origin: (f64, f64),
    probs: Vec<f64>,
}

/// The JSON shape: the five header fields plus the flat `probs` array.
#[derive(Serialize, Deserialize)]
struct RawWeedMap {
    width: usize,
    height: usize,
    cell_size: f64,
    origin_e: f64,
    origin_n: f64,
    probs: Vec<f64>,
}

impl TryFrom<RawWeedMap> for WeedMap {
    type Error = String;

    fn try_from(raw: RawWeedMap) -> Result<Self, Self::Error> {
        WeedMap::new(
            raw.width,
            raw.height,
            raw.cell_size,
            (raw.origin_e, raw.origin_n),
            raw.probs,
        )
        .map_err(|e| e.to_string())
    }
}

impl From<WeedMap> for RawWeedMap {
    fn from(map: WeedMap) -> Self {
        RawWeedMap {
            width: map.width,
            height: map.height,
            cell_size: map.cell_size,
            origin_e: map.origin.0,
            origin_n: map.origin.1,
            probs: map.probs,
        }
    }
}

impl WeedMap {
    pub fn new(
        width: usize,
        height: usize,
        cell_size: f64,
        origin: (f64, f64),
        probs: Vec<f64>,
    ) -> Result<Self, MapError> {
        if width == 0 || height == 0 {
            return Err(MapError::MalformedHeader(format!(
                "grid must be at least 1x1, got {width}x{height}"
            )));
        }
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(MapError::MalformedHeader(format!(
                "cell_size must be positive, got {cell_size}"
            )));
        }
        if !(origin.0.is_finite() && origin.1.is_finite()) {
            return Err(MapError::MalformedHeader("origin must be finite".into()));
        }
        let expected = width
            .checked_mul(height)
            .ok_or_else(|| MapError::MalformedHeader("grid dimensions overflow".into()))?;
        if probs.len() != expected {
            return Err(MapError::DimensionMismatch {
                expected,
                found: probs.len(),
            });
        }
        if let Some((cell, &value)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !(0.0..=1.0).contains(*p))
        {
            return Err(MapError::ProbabilityOutOfRange { cell, value });
        }
        Ok(WeedMap {
            width,
            height,
            cell_size,
            origin,
            probs,
        })
    }

    /// A map with the same probability everywhere.
    pub fn uniform(width: usize, height: usize, p: f64) -> Result<Self, MapError> {
        WeedMap::new(width, height, 1.0, (0.0, 0.0), vec![p; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn origin(&self) -> (f64, f64) {
        self.origin
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probability(&self, cell: CellIndex) -> Option<f64> {
        self.probs.get(cell).copied()
    }

    /// Overwrite one cell, e.g. from farmer knowledge entered at the console.
    pub fn set_probability(&mut self, cell: CellIndex, p: f64) -> Result<(), MapError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(MapError::ProbabilityOutOfRange { cell, value: p });
        }
        let len = self.probs.len();
        let slot = self.probs.get_mut(cell).ok_or(MapError::DimensionMismatch {
            expected: len,
            found: cell + 1,
        })?;
        *slot = p;
        Ok(())
    }

    pub fn cell_at(&self, row: usize, col: usize) -> Option<CellIndex> {
        (row < self.height && col < self.width).then(|| row * self.width + col)
    }

    pub fn row_col(&self, cell: CellIndex) -> (usize, usize) {
        (cell / self.width, cell % self.width)
    }

    /// Centre of a cell in world coordinates (easting, northing).
    pub fn cell_center(&self, cell: CellIndex) -> (f64, f64) {
        let (row, col) = self.row_col(cell);
        (
            self.origin.0 + (col as f64 + 0.5) * self.cell_size,
            self.origin.1 + (row as f64 + 0.5) * self.cell_size,
        )
    }

    /// 4-connected neighbours in north, west, east, south order.
    pub fn neighbors(&self, cell: CellIndex) -> impl Iterator<Item = CellIndex> + '_ {
        let (row, col) = self.row_col(cell);
        let up = row.checked_sub(1).map(|r| r * self.width + col);
        let left = col.checked_sub(1).map(|c| row * self.width + c);
        let right = (col + 1 < self.width).then(|| row * self.width + col + 1);
        let down = (row + 1 < self.height).then(|| (row + 1) * self.width + col);
        [up, left, right, down].into_iter().flatten()
    }
}

/// Parse a weed map. Number parsing never consults the locale.
pub fn load_weed_map<R: Read>(mut source: R, format: MapFormat) -> Result<WeedMap, MapError> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    match format {
        MapFormat::GridCsv => parse_csv(&text),
        MapFormat::GridJson => {
            // Decode the raw shape first so invariant violations come back as
            // structured errors rather than serde messages.
            let raw: RawWeedMap = serde_json::from_str(&text)?;
            WeedMap::new(
                raw.width,
                raw.height,
                raw.cell_size,
                (raw.origin_e, raw.origin_n),
                raw.probs,
            )
        }
    }
}

fn parse_csv(text: &str) -> Result<WeedMap, MapError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let (_, header) = lines
        .next()
        .ok_or_else(|| MapError::MalformedHeader("empty input".into()))?;
    let fields: Vec<&str> = header.split(',').map(str::trim).collect();
    if fields.len() != 5 {
        return Err(MapError::MalformedHeader(format!(
            "expected width,height,cell_size,origin_e,origin_n; got {} fields",
            fields.len()
        )));
    }
    let dim = |s: &str, name: &str| {
        s.parse::<usize>()
            .map_err(|_| MapError::MalformedHeader(format!("{name} {s:?} is not a cell count")))
    };
    let real = |s: &str, name: &str| {
        s.parse::<f64>()
            .map_err(|_| MapError::MalformedHeader(format!("{name} {s:?} is not a number")))
    };
    let width = dim(fields[0], "width")?;
    let height = dim(fields[1], "height")?;
    let cell_size = real(fields[2], "cell_size")?;
    let origin = (real(fields[3], "origin_e")?, real(fields[4], "origin_n")?);
    if width == 0 || height == 0 {
        return Err(MapError::MalformedHeader(format!(
            "grid must be at least 1x1, got {width}x{height}"
        )));
    }

    let mut probs = Vec::with_capacity(width.saturating_mul(height).min(1 << 24));
    let mut rows = 0usize;
    for (line_no, line) in lines {
        rows += 1;
        let before = probs.len();
        for value in line.split(',').map(str::trim) {
            let p = value.parse::<f64>().map_err(|_| MapError::MalformedValue {
                line: line_no,
                value: value.to_string(),
            })?;
            if !(0.0..=1.0).contains(&p) {
                return Err(MapError::ProbabilityOutOfRange {
                    cell: probs.len(),
                    value: p,
                });
            }
            probs.push(p);
        }
        if probs.len() - before != width {
            return Err(MapError::DimensionMismatch {
                expected: width * height,
                found: probs.len(),
            });
        }
    }
    if rows != height {
        return Err(MapError::DimensionMismatch {
            expected: width * height,
            found: probs.len(),
        });
    }
    WeedMap::new(width, height, cell_size, origin, probs)
}

/// Serialize a map. `f64` display output is the shortest string that parses
/// back to the same value, so save/load is lossless.
pub fn save_weed_map(map: &WeedMap, format: MapFormat) -> Vec<u8> {
    match format {
        MapFormat::GridCsv => {
            let mut out = String::new();
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                map.width, map.height, map.cell_size, map.origin.0, map.origin.1
            );
            for row in map.probs.chunks(map.width) {
                let line: Vec<String> = row.iter().map(|p| p.to_string()).collect();
                let _ = writeln!(out, "{}", line.join(","));
            }
            out.into_bytes()
        }
        MapFormat::GridJson => {
            let mut bytes =
                serde_json::to_vec_pretty(map).expect("weed maps always serialize to JSON");
            bytes.push(b'\n');
            bytes
        }
    }
}

/// Crop-row direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowAxis {
    #[default]
    ByRow,
    ByColumn,
}

/// A weed map plus the field structure the rover must respect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFieldModel", into = "RawFieldModel")]
pub struct FieldModel {
    map: WeedMap,
    row_axis: RowAxis,
    blocked: BTreeSet<CellIndex>,
    home: CellIndex,
}

#[derive(Serialize, Deserialize)]
struct RawFieldModel {
    map: WeedMap,
    #[serde(default)]
    row_axis: RowAxis,
    #[serde(default)]
    blocked: BTreeSet<CellIndex>,
    #[serde(default)]
    home: CellIndex,
}

impl TryFrom<RawFieldModel> for FieldModel {
    type Error = FieldError;

    fn try_from(raw: RawFieldModel) -> Result<Self, Self::Error> {
        FieldModel::new(raw.map, raw.row_axis, raw.blocked, raw.home)
    }
}

impl From<FieldModel> for RawFieldModel {
    fn from(f: FieldModel) -> Self {
        RawFieldModel {
            map: f.map,
            row_axis: f.row_axis,
            blocked: f.blocked,
            home: f.home,
        }
    }
}

impl FieldModel {
    pub fn new(
        map: WeedMap,
        row_axis: RowAxis,
        blocked: BTreeSet<CellIndex>,
        home: CellIndex,
    ) -> Result<Self, FieldError> {
        let cells = map.len();
        if home >= cells {
            return Err(FieldError::CellOutOfRange { cell: home, cells });
        }
        if let Some(&cell) = blocked.iter().find(|&&c| c >= cells) {
            return Err(FieldError::CellOutOfRange { cell, cells });
        }
        if blocked.contains(&home) {
            return Err(FieldError::HomeBlocked(home));
        }
        Ok(FieldModel {
            map,
            row_axis,
            blocked,
            home,
        })
    }

    /// Open field with the robot starting at cell 0.
    pub fn open(map: WeedMap) -> Self {
        FieldModel {
            map,
            row_axis: RowAxis::ByRow,
            blocked: BTreeSet::new(),
            home: 0,
        }
    }

    pub fn map(&self) -> &WeedMap {
        &self.map
    }

    pub fn row_axis(&self) -> RowAxis {
        self.row_axis
    }

    pub fn blocked(&self) -> &BTreeSet<CellIndex> {
        &self.blocked
    }

    pub fn home(&self) -> CellIndex {
        self.home
    }

    pub fn is_blocked(&self, cell: CellIndex) -> bool {
        self.blocked.contains(&cell)
    }

    /// Replace the probability map, keeping geometry constraints if they still fit.
    pub fn with_map(&self, map: WeedMap) -> Result<Self, FieldError> {
        FieldModel::new(map, self.row_axis, self.blocked.clone(), self.home)
    }

    /// Neighbours the robot may drive to.
    pub fn open_neighbors(&self, cell: CellIndex) -> impl Iterator<Item = CellIndex> + '_ {
        self.map.neighbors(cell).filter(|n| !self.blocked.contains(n))
    }

    /// Cells reachable from home through unblocked 4-neighbours.
    pub fn reachable_from_home(&self) -> BTreeSet<CellIndex> {
        let mut seen = BTreeSet::from([self.home]);
        let mut queue = VecDeque::from([self.home]);
        while let Some(cell) = queue.pop_front() {
            for n in self.open_neighbors(cell) {
                if seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        seen
    }
}

/// A probability cut in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Threshold(f64);

impl Threshold {
    pub fn new(value: f64) -> Result<Self, FieldError> {
        if (0.0..=1.0).contains(&value) {
            Ok(Threshold(value))
        } else {
            Err(FieldError::ThresholdOutOfRange(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for Threshold {
    fn default() -> Self {
        Threshold(DEFAULT_THRESHOLD)
    }
}

impl TryFrom<f64> for Threshold {
    type Error = FieldError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Threshold::new(value)
    }
}

impl From<Threshold> for f64 {
    fn from(t: Threshold) -> f64 {
        t.0
    }
}

/// Cells selected for weeding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSet {
    pub threshold: Threshold,
    pub targets: BTreeSet<CellIndex>,
}

impl TargetSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn contains(&self, cell: CellIndex) -> bool {
        self.targets.contains(&cell)
    }
}

/// Every unblocked cell whose probability is at least the threshold.
pub fn select_targets(field: &FieldModel, threshold: Threshold) -> TargetSet {
    let targets = field
        .map
        .probs
        .iter()
        .enumerate()
        .filter(|&(cell, &p)| p >= threshold.0 && !field.blocked.contains(&cell))
        .map(|(cell, _)| cell)
        .collect();
    TargetSet { threshold, targets }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv(text: &str) -> Result<WeedMap, MapError> {
        load_weed_map(text.as_bytes(), MapFormat::GridCsv)
    }

    #[test]
    fn parses_two_by_two() {
        let map = csv("2,2,0.5,0,0\n0,1\n0.25,0.5\n").unwrap();
        assert_eq!(map.width(), 2);
        assert_eq!(map.height(), 2);
        assert_eq!(map.cell_size(), 0.5);
        assert_eq!(map.origin(), (0.0, 0.0));
        assert_eq!(map.probs(), &[0.0, 1.0, 0.25, 0.5]);
    }

    #[test]
    fn rejects_probability_above_one() {
        match csv("1,1,1,0,0\n1.5\n") {
            Err(MapError::ProbabilityOutOfRange { cell: 0, value }) => assert_eq!(value, 1.5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reports_cell_index_of_bad_probability() {
        match csv("2,2,1,0,0\n0,0\n0,-0.1\n") {
            Err(MapError::ProbabilityOutOfRange { cell: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_and_dimension_errors() {
        assert!(matches!(csv(""), Err(MapError::MalformedHeader(_))));
        assert!(matches!(csv("2,2,1,0\n"), Err(MapError::MalformedHeader(_))));
        assert!(matches!(csv("0,2,1,0,0\n"), Err(MapError::MalformedHeader(_))));
        assert!(matches!(csv("1,1,-1,0,0\n0\n"), Err(MapError::MalformedHeader(_))));
        assert!(matches!(
            csv("2,2,1,0,0\n0,0\n"),
            Err(MapError::DimensionMismatch { expected: 4, found: 2 })
        ));
        assert!(matches!(
            csv("2,1,1,0,0\n0,0,0\n"),
            Err(MapError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            csv("1,1,1,0,0\n0;5\n"),
            Err(MapError::MalformedValue { line: 2, .. })
        ));
        // Comma decimal separators are not numbers.
        assert!(matches!(
            csv("1,1,1,0,0\n0;5\n"),
            Err(MapError::MalformedValue { .. })
        ));
    }

    #[test]
    fn nan_is_out_of_range() {
        assert!(matches!(
            csv("1,1,1,0,0\nNaN\n"),
            Err(MapError::ProbabilityOutOfRange { cell: 0, .. })
        ));
    }

    #[test]
    fn json_map_uses_header_field_names() {
        let map = WeedMap::new(2, 1, 0.25, (10.0, -3.5), vec![0.1, 0.9]).unwrap();
        let text = String::from_utf8(save_weed_map(&map, MapFormat::GridJson)).unwrap();
        for key in ["width", "height", "cell_size", "origin_e", "origin_n", "probs"] {
            assert!(text.contains(key), "missing {key} in {text}");
        }
        let back = load_weed_map(text.as_bytes(), MapFormat::GridJson).unwrap();
        assert_eq!(back, map);
        let bad = r#"{"width":1,"height":1,"cell_size":1,"origin_e":0,"origin_n":0,"probs":[2]}"#;
        assert!(matches!(
            load_weed_map(bad.as_bytes(), MapFormat::GridJson),
            Err(MapError::ProbabilityOutOfRange { cell: 0, .. })
        ));
        let short = r#"{"width":2,"height":1,"cell_size":1,"origin_e":0,"origin_n":0,"probs":[0]}"#;
        assert!(matches!(
            load_weed_map(short.as_bytes(), MapFormat::GridJson),
            Err(MapError::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn save_single_cell_has_one_value() {
        let map = WeedMap::new(1, 1, 1.0, (0.0, 0.0), vec![0.5]).unwrap();
        let text = String::from_utf8(save_weed_map(&map, MapFormat::GridCsv)).unwrap();
        let mut lines = text.lines();
        lines.next();
        let data: Vec<&str> = lines.flat_map(|l| l.split(',')).collect();
        assert_eq!(data, vec!["0.5"]);
    }

    #[test]
    fn save_load_identity_on_example() {
        let map = csv("2,2,0.5,0,0\n0,1\n0.25,0.5\n").unwrap();
        for format in [MapFormat::GridCsv, MapFormat::GridJson] {
            let bytes = save_weed_map(&map, format);
            assert_eq!(load_weed_map(&bytes[..], format).unwrap(), map);
        }
    }

    #[test]
    fn select_targets_examples() {
        let map = WeedMap::new(2, 2, 0.5, (0.0, 0.0), vec![0.0, 1.0, 0.25, 0.5]).unwrap();
        let field = FieldModel::open(map);
        let t = select_targets(&field, Threshold::new(0.5).unwrap());
        assert_eq!(t.targets.into_iter().collect::<Vec<_>>(), vec![1, 3]);
        let all = select_targets(&field, Threshold::new(0.0).unwrap());
        assert_eq!(all.len(), 4);

        let low = WeedMap::new(2, 1, 1.0, (0.0, 0.0), vec![0.3, 0.99]).unwrap();
        let t = select_targets(&FieldModel::open(low), Threshold::new(1.0).unwrap());
        assert!(t.is_empty());
    }

    #[test]
    fn select_targets_skips_blocked() {
        let map = WeedMap::uniform(3, 1, 1.0).unwrap();
        let field = FieldModel::new(map, RowAxis::ByRow, BTreeSet::from([1]), 0).unwrap();
        let t = select_targets(&field, Threshold::new(0.0).unwrap());
        assert_eq!(t.targets.into_iter().collect::<Vec<_>>(), vec![0, 2]);
    }

    #[test]
    fn field_model_invariants() {
        let map = WeedMap::uniform(2, 2, 0.0).unwrap();
        assert_eq!(
            FieldModel::new(map.clone(), RowAxis::ByRow, BTreeSet::from([0]), 0),
            Err(FieldError::HomeBlocked(0))
        );
        assert_eq!(
            FieldModel::new(map.clone(), RowAxis::ByRow, BTreeSet::from([4]), 0),
            Err(FieldError::CellOutOfRange { cell: 4, cells: 4 })
        );
        assert!(FieldModel::new(map, RowAxis::ByRow, BTreeSet::new(), 7).is_err());
        assert!(Threshold::new(1.01).is_err());
        assert!(Threshold::new(f64::NAN).is_err());
    }

    #[test]
    fn neighbors_are_four_connected() {
        let map = WeedMap::uniform(3, 3, 0.0).unwrap();
        let mut n: Vec<_> = map.neighbors(4).collect();
        n.sort();
        assert_eq!(n, vec![1, 3, 5, 7]);
        let mut corner: Vec<_> = map.neighbors(0).collect();
        corner.sort();
        assert_eq!(corner, vec![1, 3]);
        assert_eq!(map.neighbors(8).count(), 2);
    }

    #[test]
    fn reachability_respects_blocked() {
        let map = WeedMap::uniform(3, 1, 0.0).unwrap();
        let field = FieldModel::new(map, RowAxis::ByRow, BTreeSet::from([1]), 0).unwrap();
        assert_eq!(field.reachable_from_home(), BTreeSet::from([0]));
    }
}
