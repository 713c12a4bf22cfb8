//! Versioned text world format.
//!
//! ```text
//! rosme-world v1
//! [grid]          name, frame, width, height, resolution, point_density
//! [start]         x, y, theta                      (optional section)
//! [walls]         one run-length-encoded row per line, top row first
//! [taxonomy]      child < parent
//! [object]        id, class, x, y, theta, w, h     (repeated)
//! ```
//!
//! Wall rows use `#` for blocked and `.` for free; a run is an optional
//! count followed by the cell character, e.g. `#12.#`.

use std::collections::BTreeMap;
use std::fmt::Write;

use super::{ObjectDraft, WorldDraft, WorldError, WorldSpec, DEFAULT_POINT_DENSITY};
use crate::geometry::Pose;

pub const HEADER: &str = "rosme-world v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Grid,
    Start,
    Walls,
    Taxonomy,
    Object,
}

/// Key/value block with the line number of each entry.
#[derive(Debug, Default)]
struct Block {
    line: usize,
    entries: BTreeMap<String, (usize, String)>,
}

impl Block {
    fn insert(&mut self, line: usize, key: &str, value: &str) -> Result<(), WorldError> {
        if self
            .entries
            .insert(key.to_string(), (line, value.to_string()))
            .is_some()
        {
            return Err(WorldError::Validation(format!(
                "line {line}: duplicate key '{key}'"
            )));
        }
        Ok(())
    }

    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.remove(key)
    }

    fn require<T: std::str::FromStr>(&mut self, section: &str, key: &str) -> Result<T, WorldError> {
        match self.take(key) {
            Some((line, v)) => parse_value(line, key, &v),
            None => Err(WorldError::Validation(format!(
                "[{section}] starting at line {} is missing '{key}'",
                self.line
            ))),
        }
    }

    fn optional<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>, WorldError> {
        self.take(key)
            .map(|(line, v)| parse_value(line, key, &v))
            .transpose()
    }

    fn finish(self, section: &str) -> Result<(), WorldError> {
        match self.entries.into_iter().next() {
            Some((key, (line, _))) => Err(WorldError::Validation(format!(
                "line {line}: unknown key '{key}' in [{section}]"
            ))),
            None => Ok(()),
        }
    }
}

fn parse_value<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, WorldError> {
    v.parse().map_err(|_| WorldError::Parse {
        line,
        message: format!("invalid value '{v}' for '{key}'"),
    })
}

fn decode_row(line: usize, row: &str) -> Result<Vec<bool>, WorldError> {
    let mut out = Vec::new();
    let mut count = String::new();
    for ch in row.chars() {
        match ch {
            '0'..='9' => count.push(ch),
            '#' | '.' => {
                let n = if count.is_empty() {
                    1
                } else {
                    count.parse::<usize>().map_err(|_| WorldError::Parse {
                        line,
                        message: format!("bad run length '{count}'"),
                    })?
                };
                out.extend(std::iter::repeat_n(ch == '#', n));
                count.clear();
            }
            other => {
                return Err(WorldError::Parse {
                    line,
                    message: format!("unexpected character '{other}' in wall row"),
                })
            }
        }
    }
    if !count.is_empty() {
        return Err(WorldError::Parse {
            line,
            message: "run length without a cell character".into(),
        });
    }
    Ok(out)
}

fn encode_row(cells: &[bool]) -> String {
    let mut out = String::new();
    let mut i = 0;
    while i < cells.len() {
        let j = i + cells[i..].iter().take_while(|&&c| c == cells[i]).count();
        if j - i > 1 {
            let _ = write!(out, "{}", j - i);
        }
        out.push(if cells[i] { '#' } else { '.' });
        i = j;
    }
    out
}

/// Parses and validates world-file text.
pub fn parse_world(text: &str) -> Result<WorldSpec, WorldError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    match lines.next() {
        Some((_, HEADER)) => {}
        Some((line, other)) => {
            return Err(WorldError::Parse {
                line,
                message: format!("expected header '{HEADER}', found '{other}'"),
            })
        }
        None => {
            return Err(WorldError::Parse {
                line: 1,
                message: "empty world file".into(),
            })
        }
    }

    let mut grid: Option<Block> = None;
    let mut start: Option<Block> = None;
    let mut objects: Vec<Block> = Vec::new();
    let mut rows: Vec<(usize, Vec<bool>)> = Vec::new();
    let mut taxonomy = Vec::new();
    let mut section: Option<Section> = None;

    for (line, l) in lines {
        if let Some(name) = l.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let next = match name {
                "grid" => Section::Grid,
                "start" => Section::Start,
                "walls" => Section::Walls,
                "taxonomy" => Section::Taxonomy,
                "object" => Section::Object,
                other => {
                    return Err(WorldError::Validation(format!(
                        "line {line}: unknown section [{other}]"
                    )))
                }
            };
            let fresh = || Block {
                line,
                ..Block::default()
            };
            match next {
                Section::Grid if grid.is_some() => {
                    return Err(WorldError::Validation(format!(
                        "line {line}: duplicate [grid] section"
                    )))
                }
                Section::Grid => grid = Some(fresh()),
                Section::Start if start.is_some() => {
                    return Err(WorldError::Validation(format!(
                        "line {line}: duplicate [start] section"
                    )))
                }
                Section::Start => start = Some(fresh()),
                Section::Object => objects.push(fresh()),
                Section::Walls | Section::Taxonomy => {}
            }
            section = Some(next);
            continue;
        }
        match section {
            None => {
                return Err(WorldError::Parse {
                    line,
                    message: "content before the first section".into(),
                })
            }
            Some(Section::Walls) => rows.push((line, decode_row(line, l)?)),
            Some(Section::Taxonomy) => {
                let (child, parent) = l.split_once('<').ok_or_else(|| WorldError::Parse {
                    line,
                    message: format!("expected 'child < parent', found '{l}'"),
                })?;
                taxonomy.push((child.trim().to_string(), parent.trim().to_string()));
            }
            Some(s) => {
                let (key, value) = l.split_once('=').ok_or_else(|| WorldError::Parse {
                    line,
                    message: format!("expected 'key = value', found '{l}'"),
                })?;
                let block = match s {
                    Section::Grid => grid.as_mut(),
                    Section::Start => start.as_mut(),
                    _ => objects.last_mut(),
                }
                .expect("section block opened");
                block.insert(line, key.trim(), value.trim())?;
            }
        }
    }

    let mut g = grid.ok_or_else(|| WorldError::Validation("missing [grid] section".into()))?;
    let name = g
        .optional::<String>("name")?
        .unwrap_or_else(|| "world".into());
    let frame = g
        .optional::<String>("frame")?
        .unwrap_or_else(|| "map".into());
    let width: usize = g.require("grid", "width")?;
    let height: usize = g.require("grid", "height")?;
    let resolution: f64 = g.require("grid", "resolution")?;
    let point_density = g
        .optional::<f64>("point_density")?
        .unwrap_or(DEFAULT_POINT_DENSITY);
    g.finish("grid")?;

    let start = match start {
        Some(mut s) => {
            let pose = Pose::new(
                s.require("start", "x")?,
                s.require("start", "y")?,
                s.optional("theta")?.unwrap_or(0.0),
            );
            s.finish("start")?;
            Some(pose)
        }
        None => None,
    };

    if rows.len() != height {
        return Err(WorldError::Validation(format!(
            "[walls] has {} rows, grid height is {height}",
            rows.len()
        )));
    }
    let mut walls = vec![false; width * height];
    for (k, (line, row)) in rows.into_iter().enumerate() {
        if row.len() != width {
            return Err(WorldError::Parse {
                line,
                message: format!("wall row has {} cells, grid width is {width}", row.len()),
            });
        }
        let y = height - 1 - k;
        walls[y * width..(y + 1) * width].copy_from_slice(&row);
    }

    let mut drafts = Vec::with_capacity(objects.len());
    for mut b in objects {
        drafts.push(ObjectDraft {
            id: b.require("object", "id")?,
            class: b.require("object", "class")?,
            x: b.require("object", "x")?,
            y: b.require("object", "y")?,
            theta: b.optional("theta")?.unwrap_or(0.0),
            w: b.require("object", "w")?,
            h: b.require("object", "h")?,
        });
        b.finish("object")?;
    }

    WorldSpec::from_draft(WorldDraft {
        name,
        frame,
        resolution,
        width,
        height,
        point_density,
        start,
        walls,
        taxonomy,
        objects: drafts,
    })
}

pub(super) fn write_world(w: &WorldSpec) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{HEADER}\n");
    let _ = writeln!(s, "[grid]");
    let _ = writeln!(s, "name = {}", w.name);
    let _ = writeln!(s, "frame = {}", w.frame);
    let _ = writeln!(s, "width = {}", w.width);
    let _ = writeln!(s, "height = {}", w.height);
    let _ = writeln!(s, "resolution = {}", w.resolution);
    if w.point_density != DEFAULT_POINT_DENSITY {
        let _ = writeln!(s, "point_density = {}", w.point_density);
    }
    let _ = writeln!(
        s,
        "\n[start]\nx = {}\ny = {}\ntheta = {}",
        w.start.x, w.start.y, w.start.theta
    );
    let _ = writeln!(s, "\n[walls]");
    for y in (0..w.height).rev() {
        let _ = writeln!(
            s,
            "{}",
            encode_row(&w.walls[y * w.width..(y + 1) * w.width])
        );
    }
    let _ = writeln!(s, "\n[taxonomy]");
    for (child, parent) in w.taxonomy.edges() {
        let _ = writeln!(s, "{child} < {parent}");
    }
    for o in &w.objects {
        let _ = writeln!(
            s,
            "\n[object]\nid = {}\nclass = {}\nx = {}\ny = {}\ntheta = {}\nw = {}\nh = {}",
            o.id, o.class_label, o.pose.x, o.pose.y, o.pose.theta, o.size.0, o.size.1
        );
    }
    s
}
