//! Grid maps, MovingAI `.map`/`.scen` ingestion and grid geometry.

use std::fmt;

use thiserror::Error;

/// A grid coordinate. `x` is the column, `y` the row, origin top-left.
///
/// Coordinates are signed so that a proposed move off the edge of the grid
/// is representable; map queries reject anything outside the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn offset(self, dx: i32, dy: i32) -> Self {
        Self::new(self.x + dx, self.y + dy)
    }

    pub fn chebyshev(self, other: Cell) -> u32 {
        (self.x - other.x).unsigned_abs().max((self.y - other.y).unsigned_abs())
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// Manhattan distance.
pub fn manhattan(a: Cell, b: Cell) -> u32 {
    (a.x - b.x).unsigned_abs() + (a.y - b.y).unsigned_abs()
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MapError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("row count mismatch: expected {expected} rows, got {got}")]
    RowCountMismatch { expected: usize, got: usize },
    #[error("row {row} length mismatch: expected {expected}, got {got}")]
    RowLengthMismatch { row: usize, expected: usize, got: usize },
    #[error("unknown character {ch:?} at ({x},{y})")]
    UnknownCharacter { ch: char, x: usize, y: usize },
    #[error("cell {0} is out of bounds")]
    OutOfBounds(Cell),
    #[error("input is not valid UTF-8")]
    Encoding,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("version line missing")]
    MissingVersion,
    #[error("line {line}: malformed entry: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: map dimensions {width}x{height} do not match the map")]
    DimensionMismatch { line: usize, width: usize, height: usize },
    #[error("line {line}: {which} {cell} out of bounds")]
    OutOfBounds { line: usize, which: &'static str, cell: Cell },
    #[error("line {line}: {which} on obstacle at {cell}")]
    OnObstacle { line: usize, which: &'static str, cell: Cell },
    #[error("input is not valid UTF-8")]
    Encoding,
}

/// Static obstacle grid; the MAPF graph is the 4-connected free cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    width: usize,
    height: usize,
    /// Row-major, `true` = free.
    free: Vec<bool>,
    free_cells: Vec<Cell>,
}

/// Fixed neighbor order (up, down, left, right).
pub const DIRECTIONS: [(i32, i32); 4] = [(0, -1), (0, 1), (-1, 0), (1, 0)];

impl GridMap {
    /// Builds a map from a row-major free mask.
    pub fn new(width: usize, height: usize, free: Vec<bool>) -> Result<Self, MapError> {
        if width == 0 || height == 0 {
            return Err(MapError::MalformedHeader("width and height must be at least 1".into()));
        }
        if free.len() != width * height {
            return Err(MapError::RowCountMismatch { expected: width * height, got: free.len() });
        }
        let free_cells = (0..height)
            .flat_map(|y| (0..width).map(move |x| Cell::new(x as i32, y as i32)))
            .filter(|c| free[c.y as usize * width + c.x as usize])
            .collect();
        Ok(Self { width, height, free, free_cells })
    }

    /// An obstacle-free map.
    pub fn open(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![true; width * height]).expect("positive dimensions")
    }

    /// Parses ASCII rows with the MovingAI alphabet (no header).
    pub fn from_rows(rows: &[&str]) -> Result<Self, MapError> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        let mut free = Vec::with_capacity(width * height);
        for (y, row) in rows.iter().enumerate() {
            let n = row.chars().count();
            if n != width {
                return Err(MapError::RowLengthMismatch { row: y, expected: width, got: n });
            }
            for (x, ch) in row.chars().enumerate() {
                free.push(tile_is_free(ch).ok_or(MapError::UnknownCharacter { ch, x, y })?);
            }
        }
        Self::new(width, height, free)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.free.is_empty()
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as usize) < self.width && (c.y as usize) < self.height
    }

    /// Row-major index of an in-bounds cell.
    pub fn index(&self, c: Cell) -> Option<usize> {
        self.in_bounds(c).then(|| c.y as usize * self.width + c.x as usize)
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new((index % self.width) as i32, (index / self.width) as i32)
    }

    /// `false` for obstacles and anything off the grid.
    pub fn is_free(&self, c: Cell) -> bool {
        self.index(c).is_some_and(|i| self.free[i])
    }

    pub fn free_cells(&self) -> &[Cell] {
        &self.free_cells
    }

    /// Number of free cells |F|.
    pub fn free_cell_count(&self) -> usize {
        self.free_cells.len()
    }

    /// Free 4-neighbors in (up, down, left, right) order.
    pub fn neighbors(&self, c: Cell) -> Result<Vec<Cell>, MapError> {
        if !self.in_bounds(c) {
            return Err(MapError::OutOfBounds(c));
        }
        Ok(self.free_neighbors(c).collect())
    }

    /// Non-allocating variant of [`GridMap::neighbors`]; yields nothing for
    /// out-of-bounds input.
    pub fn free_neighbors(&self, c: Cell) -> impl Iterator<Item = Cell> + '_ {
        DIRECTIONS
            .iter()
            .map(move |&(dx, dy)| c.offset(dx, dy))
            .filter(move |n| self.is_free(*n))
    }

    pub fn free_degree(&self, c: Cell) -> usize {
        self.free_neighbors(c).count()
    }

    /// Serializes with the MovingAI grammar using `.` and `@`.
    pub fn to_movingai(&self) -> String {
        let mut out = format!("type octile\nheight {}\nwidth {}\nmap\n", self.height, self.width);
        for y in 0..self.height {
            for x in 0..self.width {
                out.push(if self.free[y * self.width + x] { '.' } else { '@' });
            }
            out.push('\n');
        }
        out
    }
}

fn tile_is_free(ch: char) -> Option<bool> {
    match ch {
        '.' | 'G' => Some(true),
        '@' | 'O' | 'T' => Some(false),
        _ => None,
    }
}

fn header_value(line: Option<&str>, key: &str) -> Result<usize, MapError> {
    let line = line.ok_or_else(|| MapError::MalformedHeader(format!("missing `{key}` line")))?;
    let mut parts = line.split_whitespace();
    match (parts.next(), parts.next(), parts.next()) {
        (Some(k), Some(v), None) if k == key => v
            .parse()
            .map_err(|_| MapError::MalformedHeader(format!("invalid {key} value `{v}`"))),
        _ => Err(MapError::MalformedHeader(format!("expected `{key} <int>`, got `{line}`"))),
    }
}

/// Parses a MovingAI `.map` file.
pub fn parse_map(bytes: &[u8]) -> Result<GridMap, MapError> {
    let text = std::str::from_utf8(bytes).map_err(|_| MapError::Encoding)?;
    let mut lines = text.lines().map(|l| l.trim_end_matches('\r'));

    match lines.next().map(str::trim) {
        Some(l) if l.split_whitespace().next() == Some("type") => {}
        other => {
            return Err(MapError::MalformedHeader(format!(
                "expected `type <name>`, got `{}`",
                other.unwrap_or("")
            )))
        }
    }
    let height = header_value(lines.next(), "height")?;
    let width = header_value(lines.next(), "width")?;
    if lines.next().map(str::trim) != Some("map") {
        return Err(MapError::MalformedHeader("expected `map` line".into()));
    }
    if width == 0 || height == 0 {
        return Err(MapError::MalformedHeader("width and height must be at least 1".into()));
    }

    let rows: Vec<&str> = lines.collect();
    let body_len = rows.iter().rposition(|r| !r.is_empty()).map_or(0, |i| i + 1);
    if body_len != height {
        return Err(MapError::RowCountMismatch { expected: height, got: body_len });
    }
    let mut free = Vec::with_capacity(width * height);
    for (y, row) in rows[..body_len].iter().enumerate() {
        let n = row.chars().count();
        if n != width {
            return Err(MapError::RowLengthMismatch { row: y, expected: width, got: n });
        }
        for (x, ch) in row.chars().enumerate() {
            free.push(tile_is_free(ch).ok_or(MapError::UnknownCharacter { ch, x, y })?);
        }
    }
    GridMap::new(width, height, free)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioEntry {
    pub bucket: u32,
    pub map_name: String,
    pub start: Cell,
    pub goal: Cell,
    pub reference_length: f64,
}

/// Ordered start/goal entries validated against a map.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scenario {
    pub entries: Vec<ScenarioEntry>,
}

impl Scenario {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Serializes with the version-1 grammar.
    pub fn to_movingai(&self, map: &GridMap) -> String {
        let mut out = String::from("version 1\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                e.bucket,
                e.map_name,
                map.width(),
                map.height(),
                e.start.x,
                e.start.y,
                e.goal.x,
                e.goal.y,
                e.reference_length
            ));
        }
        out
    }
}

/// Parses a MovingAI version-1 `.scen` file and validates every entry.
pub fn parse_scenario(bytes: &[u8], map: &GridMap) -> Result<Scenario, ScenarioError> {
    let text = std::str::from_utf8(bytes).map_err(|_| ScenarioError::Encoding)?;
    let mut lines = text.lines().map(|l| l.trim_end_matches('\r')).enumerate();

    match lines.next() {
        Some((_, l)) => {
            let mut p = l.split_whitespace();
            let ok = p.next() == Some("version")
                && p.next().and_then(|v| v.parse::<f64>().ok()).is_some_and(|v| v == 1.0);
            if !ok {
                return Err(ScenarioError::MissingVersion);
            }
        }
        None => return Err(ScenarioError::MissingVersion),
    }

    let mut entries = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = if line.contains('\t') {
            line.split('\t').map(str::trim).collect()
        } else {
            line.split_whitespace().collect()
        };
        if fields.len() != 9 {
            return Err(ScenarioError::Malformed {
                line: line_no,
                reason: format!("expected 9 fields, got {}", fields.len()),
            });
        }
        let int = |k: usize, name: &str| -> Result<i64, ScenarioError> {
            fields[k].parse::<i64>().map_err(|_| ScenarioError::Malformed {
                line: line_no,
                reason: format!("invalid {name} `{}`", fields[k]),
            })
        };
        let bucket = int(0, "bucket")?;
        let (mw, mh) = (int(2, "map width")?, int(3, "map height")?);
        let start = Cell::new(int(4, "start x")? as i32, int(5, "start y")? as i32);
        let goal = Cell::new(int(6, "goal x")? as i32, int(7, "goal y")? as i32);
        let reference_length = fields[8].parse::<f64>().map_err(|_| ScenarioError::Malformed {
            line: line_no,
            reason: format!("invalid optimal length `{}`", fields[8]),
        })?;
        if bucket < 0 {
            return Err(ScenarioError::Malformed { line: line_no, reason: "negative bucket".into() });
        }
        if mw != map.width() as i64 || mh != map.height() as i64 {
            return Err(ScenarioError::DimensionMismatch {
                line: line_no,
                width: mw.max(0) as usize,
                height: mh.max(0) as usize,
            });
        }
        for (which, c) in [("start", start), ("goal", goal)] {
            if !map.in_bounds(c) {
                return Err(ScenarioError::OutOfBounds { line: line_no, which, cell: c });
            }
            if !map.is_free(c) {
                return Err(ScenarioError::OnObstacle { line: line_no, which, cell: c });
            }
        }
        entries.push(ScenarioEntry {
            bucket: bucket as u32,
            map_name: fields[1].to_string(),
            start,
            goal,
            reference_length,
        });
    }
    Ok(Scenario { entries })
}
