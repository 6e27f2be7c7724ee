//! Static kitchen layouts and the text format they are stored in.
//!
//! ```text
//! name cramped_room
//! cook_time 20          (optional)
//! episode_length 1000   (optional)
//! ##P##
//! O  2O
//! #1  #
//! #D#S#
//! ```
//!
//! `#` counter, space floor, `O` onion pile, `D` dish pile, `P` pot,
//! `S` delivery zone, `1`/`2` spawn cells (floor) for seat 0 and seat 1.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_COOK_TIME: u32 = 20;
pub const DEFAULT_EPISODE_LENGTH: u32 = 1000;

/// Grid cell coordinate; `x` is the column, `y` the row (growing southwards).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pos {
    pub x: i32,
    pub y: i32,
}

impl Pos {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn offset(self, dx: i32, dy: i32) -> Self {
        Self::new(self.x + dx, self.y + dy)
    }

    pub fn manhattan(self, other: Pos) -> i32 {
        (self.x - other.x).abs() + (self.y - other.y).abs()
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tile {
    Floor,
    Counter,
    OnionPile,
    DishPile,
    Pot,
    DeliveryZone,
}

impl Tile {
    pub fn glyph(self) -> char {
        match self {
            Tile::Floor => ' ',
            Tile::Counter => '#',
            Tile::OnionPile => 'O',
            Tile::DishPile => 'D',
            Tile::Pot => 'P',
            Tile::DeliveryZone => 'S',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LayoutError {
    #[error("missing `name <id>` header line")]
    MissingName,
    #[error("line {line}: invalid header value `{value}` for `{key}`")]
    BadHeader { line: usize, key: String, value: String },
    #[error("layout has no grid rows")]
    EmptyGrid,
    #[error("row {row}: expected {expected} columns, found {found}")]
    RaggedRow { row: usize, expected: usize, found: usize },
    #[error("row {row}, column {col}: unknown character {ch:?}")]
    BadChar { row: usize, col: usize, ch: char },
    #[error("expected 2 spawn points, found {found}")]
    SpawnCount { found: usize },
    #[error("row {row}, column {col}: duplicate spawn point `{id}`")]
    DuplicateSpawn { row: usize, col: usize, id: char },
    #[error("row {row}, column {col}: boundary cell is floor")]
    OpenBoundary { row: usize, col: usize },
    #[error("layout has no {kind:?} tile")]
    MissingTile { kind: Tile },
    #[error("row {row}, column {col}: no {kind:?} tile is reachable by either agent")]
    Unreachable { row: usize, col: usize, kind: Tile },
    #[error("{0}")]
    Invalid(String),
}

/// A validated kitchen. Construct with [`parse_layout`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LayoutRepr", into = "LayoutRepr")]
pub struct Layout {
    name: String,
    width: usize,
    height: usize,
    tiles: Vec<Tile>,
    spawn_points: [Pos; 2],
    episode_length: u32,
    cook_time: u32,
    pots: Vec<Pos>,
}

impl Layout {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn spawn_points(&self) -> [Pos; 2] {
        self.spawn_points
    }

    pub fn episode_length(&self) -> u32 {
        self.episode_length
    }

    pub fn cook_time(&self) -> u32 {
        self.cook_time
    }

    /// Pot cells in row-major order.
    pub fn pots(&self) -> &[Pos] {
        &self.pots
    }

    pub fn in_bounds(&self, p: Pos) -> bool {
        p.x >= 0 && p.y >= 0 && (p.x as usize) < self.width && (p.y as usize) < self.height
    }

    /// Tile at `p`; off-grid cells read as counters.
    pub fn tile(&self, p: Pos) -> Tile {
        if self.in_bounds(p) {
            self.tiles[p.y as usize * self.width + p.x as usize]
        } else {
            Tile::Counter
        }
    }

    pub fn is_floor(&self, p: Pos) -> bool {
        self.tile(p) == Tile::Floor
    }

    /// Row-major iterator over all cells of one kind.
    pub fn cells_of(&self, kind: Tile) -> impl Iterator<Item = Pos> + '_ {
        self.tiles
            .iter()
            .enumerate()
            .filter(move |(_, t)| **t == kind)
            .map(move |(i, _)| Pos::new((i % self.width) as i32, (i / self.width) as i32))
    }

    /// Copy with a different episode length (used by trainers and rounds).
    pub fn with_episode_length(&self, episode_length: u32) -> Self {
        let mut out = self.clone();
        out.episode_length = episode_length.max(1);
        out
    }

    pub fn with_cook_time(&self, cook_time: u32) -> Self {
        let mut out = self.clone();
        out.cook_time = cook_time.max(1);
        out
    }

    /// Grid rows in file notation, spawns included.
    pub fn rows(&self) -> Vec<String> {
        (0..self.height)
            .map(|y| {
                (0..self.width)
                    .map(|x| {
                        let p = Pos::new(x as i32, y as i32);
                        if p == self.spawn_points[0] {
                            '1'
                        } else if p == self.spawn_points[1] {
                            '2'
                        } else {
                            self.tile(p).glyph()
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Serializes back to the layout file format.
    pub fn to_text(&self) -> String {
        let mut out = format!("name {}\ncook_time {}\nepisode_length {}\n", self.name, self.cook_time, self.episode_length);
        for row in self.rows() {
            out.push_str(&row);
            out.push('\n');
        }
        out
    }

    /// Floor cells reachable from `from` by 4-neighbour moves.
    pub fn reachable_floor(&self, from: Pos) -> Vec<bool> {
        let mut seen = vec![false; self.width * self.height];
        let mut queue = VecDeque::new();
        if self.is_floor(from) {
            seen[self.index(from)] = true;
            queue.push_back(from);
        }
        while let Some(p) = queue.pop_front() {
            for (dx, dy) in [(0, -1), (0, 1), (1, 0), (-1, 0)] {
                let q = p.offset(dx, dy);
                if self.is_floor(q) && !seen[self.index(q)] {
                    seen[self.index(q)] = true;
                    queue.push_back(q);
                }
            }
        }
        seen
    }

    fn index(&self, p: Pos) -> usize {
        p.y as usize * self.width + p.x as usize
    }
}

const HEADER_KEYS: [&str; 3] = ["name", "cook_time", "episode_length"];

/// Parses and validates a layout file.
pub fn parse_layout(text: &str) -> Result<Layout, LayoutError> {
    let mut name = None;
    let mut cook_time = DEFAULT_COOK_TIME;
    let mut episode_length = DEFAULT_EPISODE_LENGTH;
    let mut lines = text.lines().map(|l| l.trim_end_matches('\r')).enumerate().peekable();

    while let Some((_, line)) = lines.peek() {
        let line = *line;
        if line.trim().is_empty() {
            lines.next();
            continue;
        }
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or_default();
        if !HEADER_KEYS.contains(&key) {
            break;
        }
        let (idx, _) = lines.next().unwrap();
        let value: String = parts.collect::<Vec<_>>().join(" ");
        let bad = || LayoutError::BadHeader { line: idx + 1, key: key.to_string(), value: value.clone() };
        match key {
            "name" => {
                if value.is_empty() || value.contains(char::is_whitespace) {
                    return Err(bad());
                }
                name = Some(value.clone());
            }
            "cook_time" => cook_time = value.parse().ok().filter(|v| *v > 0).ok_or_else(bad)?,
            _ => episode_length = value.parse().ok().filter(|v| *v > 0).ok_or_else(bad)?,
        }
    }
    let name = name.ok_or(LayoutError::MissingName)?;

    let mut rows: Vec<&str> = lines.map(|(_, l)| l).collect();
    while rows.last().is_some_and(|l| l.trim().is_empty()) {
        rows.pop();
    }
    if rows.is_empty() {
        return Err(LayoutError::EmptyGrid);
    }
    let width = rows[0].chars().count();
    let height = rows.len();

    let mut tiles = Vec::with_capacity(width * height);
    let mut spawns: [Option<Pos>; 2] = [None, None];
    let mut spawn_count = 0;
    for (y, row) in rows.iter().enumerate() {
        let found = row.chars().count();
        if found != width {
            return Err(LayoutError::RaggedRow { row: y, expected: width, found });
        }
        for (x, ch) in row.chars().enumerate() {
            let tile = match ch {
                '#' => Tile::Counter,
                ' ' => Tile::Floor,
                'O' => Tile::OnionPile,
                'D' => Tile::DishPile,
                'P' => Tile::Pot,
                'S' => Tile::DeliveryZone,
                '1' | '2' => {
                    let seat = (ch as u8 - b'1') as usize;
                    spawn_count += 1;
                    if spawns[seat].is_some() {
                        return Err(LayoutError::DuplicateSpawn { row: y, col: x, id: ch });
                    }
                    spawns[seat] = Some(Pos::new(x as i32, y as i32));
                    Tile::Floor
                }
                _ => return Err(LayoutError::BadChar { row: y, col: x, ch }),
            };
            tiles.push(tile);
        }
    }
    let spawn_points = match spawns {
        [Some(a), Some(b)] => [a, b],
        _ => return Err(LayoutError::SpawnCount { found: spawn_count }),
    };

    let mut layout = Layout { name, width, height, tiles, spawn_points, episode_length, cook_time, pots: Vec::new() };
    for y in 0..height {
        for x in 0..width {
            let boundary = x == 0 || y == 0 || x + 1 == width || y + 1 == height;
            if boundary && layout.is_floor(Pos::new(x as i32, y as i32)) {
                return Err(LayoutError::OpenBoundary { row: y, col: x });
            }
        }
    }
    layout.pots = layout.cells_of(Tile::Pot).collect();
    check_reachability(&layout)?;
    Ok(layout)
}

fn check_reachability(layout: &Layout) -> Result<(), LayoutError> {
    let reach: Vec<Vec<bool>> = layout.spawn_points.iter().map(|&s| layout.reachable_floor(s)).collect();
    let touches = |p: Pos| {
        [(0, -1), (0, 1), (1, 0), (-1, 0)].iter().any(|&(dx, dy)| {
            let q = p.offset(dx, dy);
            layout.is_floor(q) && reach.iter().any(|r| r[layout.index(q)])
        })
    };
    for kind in [Tile::Pot, Tile::OnionPile, Tile::DishPile, Tile::DeliveryZone] {
        let mut cells = layout.cells_of(kind).peekable();
        let first = *cells.peek().ok_or(LayoutError::MissingTile { kind })?;
        if !cells.any(touches) {
            return Err(LayoutError::Unreachable { row: first.y as usize, col: first.x as usize, kind });
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct LayoutRepr {
    name: String,
    width: usize,
    height: usize,
    cook_time: u32,
    episode_length: u32,
    rows: Vec<String>,
}

impl From<Layout> for LayoutRepr {
    fn from(l: Layout) -> Self {
        LayoutRepr {
            rows: l.rows(),
            name: l.name,
            width: l.width,
            height: l.height,
            cook_time: l.cook_time,
            episode_length: l.episode_length,
        }
    }
}

impl TryFrom<LayoutRepr> for Layout {
    type Error = LayoutError;

    fn try_from(r: LayoutRepr) -> Result<Self, Self::Error> {
        let mut text = format!("name {}\ncook_time {}\nepisode_length {}\n", r.name, r.cook_time, r.episode_length);
        for row in &r.rows {
            text.push_str(row);
            text.push('\n');
        }
        let layout = parse_layout(&text)?;
        if layout.width != r.width || layout.height != r.height {
            return Err(LayoutError::Invalid(format!(
                "declared size {}x{} does not match grid {}x{}",
                r.width, r.height, layout.width, layout.height
            )));
        }
        Ok(layout)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CRAMPED: &str = "name cramped_room\n##P##\nO  2O\n#1  #\n#D#S#\n";

    #[test]
    fn parses_cramped_room() {
        let l = parse_layout(CRAMPED).unwrap();
        assert_eq!(l.name(), "cramped_room");
        assert_eq!((l.width(), l.height()), (5, 4));
        assert_eq!(l.pots(), &[Pos::new(2, 0)]);
        assert_eq!(l.spawn_points(), [Pos::new(1, 2), Pos::new(3, 1)]);
        assert_eq!(l.cook_time(), DEFAULT_COOK_TIME);
        assert_eq!(l.episode_length(), DEFAULT_EPISODE_LENGTH);
    }

    #[test]
    fn one_spawn_point_is_rejected() {
        let err = parse_layout("name x\n##P##\nO   O\n#1  #\n#D#S#\n").unwrap_err();
        assert_eq!(err, LayoutError::SpawnCount { found: 1 });
        assert!(err.to_string().contains("expected 2 spawn points"));
    }

    #[test]
    fn bad_character_names_position() {
        let err = parse_layout("name x\n##P##\nO  2O\n#1 X#\n#D#S#\n").unwrap_err();
        assert_eq!(err, LayoutError::BadChar { row: 2, col: 3, ch: 'X' });
        assert!(err.to_string().contains("row 2, column 3"));
    }

    #[test]
    fn open_boundary_and_ragged_rows() {
        assert_eq!(
            parse_layout("name x\n##P##\n   2O\n#1  #\n#D#S#\n").unwrap_err(),
            LayoutError::OpenBoundary { row: 1, col: 0 }
        );
        assert!(matches!(parse_layout("name x\n##P##\nO  2O\n#1 #\n#D#S#\n"), Err(LayoutError::RaggedRow { row: 2, .. })));
    }

    #[test]
    fn unreachable_pot_is_rejected() {
        // pot walled off behind counters
        let err = parse_layout("name x\n######\n#P#O #\n### 2#\n#1 DS#\n######\n").unwrap_err();
        assert_eq!(err, LayoutError::Unreachable { row: 1, col: 1, kind: Tile::Pot });
    }

    #[test]
    fn header_values_and_text_round_trip() {
        let l = parse_layout("name tiny\ncook_time 5\nepisode_length 30\n##P##\nO  2O\n#1  #\n#D#S#\n").unwrap();
        assert_eq!((l.cook_time(), l.episode_length()), (5, 30));
        assert_eq!(parse_layout(&l.to_text()).unwrap(), l);
        let json = serde_json::to_string(&l).unwrap();
        assert_eq!(serde_json::from_str::<Layout>(&json).unwrap(), l);
        assert!(matches!(parse_layout("name x\ncook_time zero\n#"), Err(LayoutError::BadHeader { line: 2, .. })));
        assert_eq!(parse_layout("##P##\n"), Err(LayoutError::MissingName));
    }
}
