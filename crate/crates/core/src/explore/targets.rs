//! Frontier clustering and exploration target selection.

use rand::Rng;
use std::collections::{BTreeSet, VecDeque};

use super::planner::{reachable_from, Passable};
use super::ExploreError;
use crate::geometry::Cell;
use crate::semknow::{CellState, KnownMap};

/// Groups cells into 8-connected clusters. Clusters come out ordered by
/// their lowest cell index, cells within a cluster in index order.
pub fn frontier_clusters(width: usize, height: usize, cells: &[Cell]) -> Vec<Vec<Cell>> {
    let mut member = vec![false; width * height];
    for c in cells {
        member[c.index(width)] = true;
    }
    let mut seeds: Vec<Cell> = cells.to_vec();
    seeds.sort_by_key(|c| c.index(width));
    let mut seen = vec![false; width * height];
    let mut clusters = Vec::new();
    for seed in seeds {
        if seen[seed.index(width)] {
            continue;
        }
        seen[seed.index(width)] = true;
        let mut cluster = vec![seed];
        let mut queue = VecDeque::from([seed]);
        while let Some(c) = queue.pop_front() {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (c.x as i64 + dx, c.y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
                        continue;
                    }
                    let i = ny as usize * width + nx as usize;
                    if member[i] && !seen[i] {
                        seen[i] = true;
                        let n = Cell::new(nx as usize, ny as usize);
                        cluster.push(n);
                        queue.push_back(n);
                    }
                }
            }
        }
        cluster.sort_by_key(|c| c.index(width));
        clusters.push(cluster);
    }
    clusters
}

/// The cell of `cluster` nearest its centroid; ties go to the lowest index.
pub fn nearest_to_centroid(cluster: &[Cell]) -> Cell {
    let n = cluster.len() as f64;
    let cx = cluster.iter().map(|c| c.x as f64).sum::<f64>() / n;
    let cy = cluster.iter().map(|c| c.y as f64).sum::<f64>() / n;
    let d2 = |c: &Cell| (c.x as f64 - cx).powi(2) + (c.y as f64 - cy).powi(2);
    let mut best = cluster[0];
    for c in &cluster[1..] {
        if d2(c) < d2(&best) {
            best = *c;
        }
    }
    best
}

/// Target in the biggest frontier.
///
/// Frontier cells reachable from `robot` and not in `excluded` (cell
/// indices) are clustered by 8-connectivity, and clusters smaller than
/// `min_size` are dropped. The biggest cluster wins, ties going to the
/// cluster holding the lowest cell index; the target is its cell nearest the
/// centroid.
pub fn next_target_frontier(
    known: &KnownMap,
    robot: Cell,
    excluded: &BTreeSet<usize>,
    min_size: usize,
) -> Result<Cell, ExploreError> {
    let reachable = reachable_from(known, robot, Passable::KnownFree);
    let candidates: Vec<Cell> = known
        .frontier_cells()
        .into_iter()
        .filter(|c| {
            let i = c.index(known.width);
            reachable[i] && !excluded.contains(&i)
        })
        .collect();
    let clusters = frontier_clusters(known.width, known.height, &candidates);
    let mut best: Option<&Vec<Cell>> = None;
    for c in clusters.iter().filter(|c| c.len() >= min_size) {
        if best.is_none_or(|b| c.len() > b.len()) {
            best = Some(c);
        }
    }
    best.map(|c| nearest_to_centroid(c))
        .ok_or(ExploreError::Exhausted)
}

/// Uniform pick among known free cells reachable from `robot`.
///
/// Draws uniformly over all known free cells and redraws unreachable picks
/// up to `max_tries` times, then draws directly from the reachable ones.
pub fn next_target_random<R: Rng + ?Sized>(
    known: &KnownMap,
    robot: Cell,
    rng: &mut R,
    max_tries: u32,
) -> Result<Cell, ExploreError> {
    let free: Vec<usize> = (0..known.cells().len())
        .filter(|&i| known.get_index(i) == CellState::Free)
        .collect();
    if free.is_empty() {
        return Err(ExploreError::NoFreeSpace);
    }
    let reachable = reachable_from(known, robot, Passable::KnownFree);
    for _ in 0..max_tries {
        let i = free[rng.random_range(0..free.len())];
        if reachable[i] {
            return Ok(Cell::from_index(i, known.width));
        }
    }
    let pool: Vec<usize> = free.into_iter().filter(|&i| reachable[i]).collect();
    if pool.is_empty() {
        return Err(ExploreError::NoFreeSpace);
    }
    Ok(Cell::from_index(
        pool[rng.random_range(0..pool.len())],
        known.width,
    ))
}

/// Uniform pick among `cells` (a world-level reachability mask).
pub fn sample_mask<R: Rng + ?Sized>(
    mask: &[bool],
    width: usize,
    rng: &mut R,
) -> Result<Cell, ExploreError> {
    let pool: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    if pool.is_empty() {
        return Err(ExploreError::NoFreeSpace);
    }
    Ok(Cell::from_index(
        pool[rng.random_range(0..pool.len())],
        width,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simkernel::{session_rng, RngStream};

    fn map_from(rows: &[&str]) -> KnownMap {
        // Top row first; '.' free, '#' occupied, '?' unknown.
        let h = rows.len();
        let w = rows[0].len();
        let mut m = KnownMap::unknown(w, h, 0.1);
        for (r, row) in rows.iter().enumerate() {
            for (x, ch) in row.chars().enumerate() {
                let c = Cell::new(x, h - 1 - r);
                match ch {
                    '.' => {
                        m.reveal(c, CellState::Free);
                    }
                    '#' => {
                        m.reveal(c, CellState::Occupied);
                    }
                    _ => {}
                }
            }
        }
        m
    }

    /// Clustering oracle: repeated union of 8-adjacent pairs until stable.
    fn brute_clusters(cells: &[Cell]) -> Vec<BTreeSet<Cell>> {
        let mut label: Vec<usize> = (0..cells.len()).collect();
        loop {
            let mut changed = false;
            for a in 0..cells.len() {
                for b in 0..cells.len() {
                    let adj = cells[a].x.abs_diff(cells[b].x) <= 1
                        && cells[a].y.abs_diff(cells[b].y) <= 1;
                    if adj && label[b] < label[a] {
                        label[a] = label[b];
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let ids: BTreeSet<usize> = label.iter().copied().collect();
        ids.into_iter()
            .map(|id| {
                (0..cells.len())
                    .filter(|&k| label[k] == id)
                    .map(|k| cells[k])
                    .collect()
            })
            .collect()
    }

    #[test]
    fn no_frontier_is_exhausted() {
        let m = map_from(&["#####", "#...#", "#...#", "#####"]);
        assert_eq!(
            next_target_frontier(&m, Cell::new(1, 1), &BTreeSet::new(), 1),
            Err(ExploreError::Exhausted)
        );
    }

    #[test]
    fn bigger_cluster_wins() {
        // A 12-cell frontier along the top and a 5-cell one along the bottom right.
        let m = map_from(&[
            "????????????????????",
            "............########",
            "....................",
            "....................",
            "###############.....",
            "????????????????????",
        ]);
        let f = m.frontier_cells();
        let clusters = frontier_clusters(m.width, m.height, &f);
        let mut sizes: Vec<usize> = clusters.iter().map(Vec::len).collect();
        sizes.sort();
        assert_eq!(sizes, vec![5, 12]);
        let oracle = brute_clusters(&f);
        let got: Vec<BTreeSet<Cell>> = clusters
            .iter()
            .map(|c| c.iter().copied().collect())
            .collect();
        assert_eq!(oracle.len(), got.len());
        assert!(oracle.iter().all(|c| got.contains(c)));

        let t = next_target_frontier(&m, Cell::new(3, 2), &BTreeSet::new(), 1).unwrap();
        assert_eq!(t.y, 4);
        assert!(t.x <= 11);
    }

    #[test]
    fn equal_clusters_tie_to_the_lowest_index() {
        let m = map_from(&["???#???", "...#...", ".......", "#######"]);
        // Two 3-cell clusters at the top; the western one holds the lower index.
        let t = next_target_frontier(&m, Cell::new(3, 1), &BTreeSet::new(), 1).unwrap();
        assert_eq!(t, Cell::new(1, 2));
    }

    #[test]
    fn excluded_cells_are_skipped() {
        let m = map_from(&["???", "...", "###"]);
        let all: BTreeSet<usize> = m.frontier_cells().iter().map(|c| c.index(3)).collect();
        assert_eq!(
            next_target_frontier(&m, Cell::new(1, 1), &all, 1),
            Err(ExploreError::Exhausted)
        );
    }

    #[test]
    fn random_targets() {
        let m = map_from(&["###", "#.#", "###"]);
        let mut rng = session_rng(7, RngStream::Policy);
        assert_eq!(
            next_target_random(&m, Cell::new(1, 1), &mut rng, 100),
            Ok(Cell::new(1, 1))
        );
        let none = map_from(&["###", "###"]);
        assert_eq!(
            next_target_random(&none, Cell::new(1, 1), &mut rng, 100),
            Err(ExploreError::NoFreeSpace)
        );

        let room = map_from(&[
            "#########",
            "#.......#",
            "#.......#",
            "#.......#",
            "#########",
        ]);
        let seq = |seed| {
            let mut rng = session_rng(seed, RngStream::Policy);
            (0..20)
                .map(|_| next_target_random(&room, Cell::new(4, 2), &mut rng, 100).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(seq(3), seq(3));
    }

    #[test]
    fn unreachable_free_cells_are_never_picked() {
        let m = map_from(&["#######", "#..#..#", "#######"]);
        let mut rng = session_rng(1, RngStream::Policy);
        for _ in 0..200 {
            let c = next_target_random(&m, Cell::new(1, 1), &mut rng, 3).unwrap();
            assert!(c.x < 3);
        }
    }

    #[test]
    fn random_targets_are_uniform() {
        // 6 × 6 open interior: each cell has p = 1/36 over 1000 draws.
        let mut rows = vec!["########".to_string()];
        rows.extend((0..6).map(|_| "#......#".to_string()));
        rows.push("########".to_string());
        let refs: Vec<&str> = rows.iter().map(String::as_str).collect();
        let m = map_from(&refs);
        let mut rng = session_rng(2024, RngStream::Policy);
        let mut counts = std::collections::BTreeMap::new();
        let draws = 1000;
        for _ in 0..draws {
            *counts
                .entry(next_target_random(&m, Cell::new(3, 3), &mut rng, 100).unwrap())
                .or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 36);
        let p = 1.0 / 36.0;
        let mean = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for (c, &k) in &counts {
            assert!(
                (k as f64 - mean).abs() <= 3.0 * sigma,
                "{c:?}: {k} vs {mean:.1} ± {:.1}",
                3.0 * sigma
            );
        }
    }
}
