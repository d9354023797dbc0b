use crate::error::{invalid, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

pub type Polyline = Vec<[f64; 2]>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourLevel {
    pub level: f64,
    pub polylines: Vec<Polyline>,
}

/// Iso-lines of a surface, one entry per requested level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ContourSet {
    pub levels: Vec<ContourLevel>,
}

impl ContourSet {
    pub fn get(&self, level: f64) -> Option<&ContourLevel> {
        self.levels.iter().find(|l| l.level == level)
    }
}

/// Samples `f` on a dense lattice over `bounds = [x0, x1, y0, y1]` and
/// contours it. `grid_nodes` is the node count of the source grid along each
/// axis; the lattice has `resolution` times as many intervals.
pub fn extract_contours(
    f: impl Fn(f64, f64) -> f64,
    bounds: [f64; 4],
    grid_nodes: (usize, usize),
    levels: &[f64],
    resolution: usize,
) -> Result<ContourSet> {
    if resolution < 2 {
        return Err(invalid(format!("contour resolution must be at least 2x the grid, got {resolution}")));
    }
    let [x0, x1, y0, y1] = bounds;
    let nx = resolution * grid_nodes.0.saturating_sub(1).max(1) + 1;
    let ny = resolution * grid_nodes.1.saturating_sub(1).max(1) + 1;
    let lerp = |a: f64, b: f64, i: usize, n: usize| if n > 1 { a + (b - a) * i as f64 / (n - 1) as f64 } else { a };
    let xs: Vec<f64> = (0..nx).map(|i| lerp(x0, x1, i, nx)).collect();
    let ys: Vec<f64> = (0..ny).map(|j| lerp(y0, y1, j, ny)).collect();
    let mut values = Vec::with_capacity(nx * ny);
    for &x in &xs {
        for &y in &ys {
            values.push(f(x, y));
        }
    }
    Ok(ContourSet {
        levels: levels
            .iter()
            .map(|&level| ContourLevel { level, polylines: contour_field(&xs, &ys, &values, level) })
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Edge {
    /// Between `(i, j)` and `(i + 1, j)`.
    X(usize, usize),
    /// Between `(i, j)` and `(i, j + 1)`.
    Y(usize, usize),
}

/// Marching squares on `values[i * ys.len() + j] = f(xs[i], ys[j])`. A point
/// is inside when its value is `>= level`.
pub fn contour_field(xs: &[f64], ys: &[f64], values: &[f64], level: f64) -> Vec<Polyline> {
    let (nx, ny) = (xs.len(), ys.len());
    assert_eq!(values.len(), nx * ny, "field shape mismatch");
    if nx < 2 || ny < 2 {
        return Vec::new();
    }
    let v = |i: usize, j: usize| values[i * ny + j];
    let point = |e: Edge| -> [f64; 2] {
        let (a, b, pa, pb) = match e {
            Edge::X(i, j) => (v(i, j), v(i + 1, j), [xs[i], ys[j]], [xs[i + 1], ys[j]]),
            Edge::Y(i, j) => (v(i, j), v(i, j + 1), [xs[i], ys[j]], [xs[i], ys[j + 1]]),
        };
        let t = if b != a { ((level - a) / (b - a)).clamp(0.0, 1.0) } else { 0.5 };
        [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]
    };

    let mut segments: Vec<(Edge, Edge)> = Vec::new();
    for i in 0..nx - 1 {
        for j in 0..ny - 1 {
            // Corners counter-clockwise from (i, j).
            let c = [v(i, j), v(i + 1, j), v(i + 1, j + 1), v(i, j + 1)];
            let bits: Vec<bool> = c.iter().map(|&x| x >= level).collect();
            let code = bits.iter().enumerate().fold(0u8, |acc, (k, &b)| acc | ((b as u8) << k));
            let (bottom, right, top, left) = (Edge::X(i, j), Edge::Y(i + 1, j), Edge::X(i, j + 1), Edge::Y(i, j));
            let centre_inside = c.iter().sum::<f64>() / 4.0 >= level;
            match code {
                0 | 15 => {}
                1 | 14 => segments.push((left, bottom)),
                2 | 13 => segments.push((bottom, right)),
                3 | 12 => segments.push((left, right)),
                4 | 11 => segments.push((right, top)),
                6 | 9 => segments.push((bottom, top)),
                7 | 8 => segments.push((left, top)),
                5 => {
                    if centre_inside {
                        segments.push((left, top));
                        segments.push((bottom, right));
                    } else {
                        segments.push((left, bottom));
                        segments.push((right, top));
                    }
                }
                10 => {
                    if centre_inside {
                        segments.push((left, bottom));
                        segments.push((right, top));
                    } else {
                        segments.push((left, top));
                        segments.push((bottom, right));
                    }
                }
                _ => unreachable!(),
            }
        }
    }

    let chains = join_segments(&segments);
    chains.into_iter().map(|chain| chain.into_iter().map(point).collect()).collect()
}

/// Links segments sharing an edge crossing into maximal chains. Open chains
/// start at crossings of degree one; the remainder are closed loops.
fn join_segments(segments: &[(Edge, Edge)]) -> Vec<Vec<Edge>> {
    let mut incident: HashMap<Edge, Vec<usize>> = HashMap::new();
    for (s, &(a, b)) in segments.iter().enumerate() {
        incident.entry(a).or_default().push(s);
        incident.entry(b).or_default().push(s);
    }
    let mut used = vec![false; segments.len()];
    let mut chains = Vec::new();
    let walk = |start_seg: usize, start: Edge, used: &mut Vec<bool>| -> Vec<Edge> {
        let mut chain = vec![start];
        let (mut seg, mut at) = (start_seg, start);
        loop {
            used[seg] = true;
            let (a, b) = segments[seg];
            let next = if a == at { b } else { a };
            chain.push(next);
            at = next;
            match incident[&at].iter().find(|&&s| !used[s]) {
                Some(&s) => seg = s,
                None => break,
            }
        }
        chain
    };
    // Deterministic order: segments are generated in a fixed scan.
    for s in 0..segments.len() {
        if used[s] {
            continue;
        }
        let (a, b) = segments[s];
        if incident[&a].len() == 1 {
            chains.push(walk(s, a, &mut used));
        } else if incident[&b].len() == 1 {
            chains.push(walk(s, b, &mut used));
        }
    }
    for s in 0..segments.len() {
        if !used[s] {
            chains.push(walk(s, segments[s].0, &mut used));
        }
    }
    chains
}
