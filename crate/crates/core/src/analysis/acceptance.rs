use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::AnalysisError;

/// Normalized-current band, absolute, whose deviations are averaged into
/// the acceptance angle.
pub const ACCEPTANCE_BAND: (f64, f64) = (0.89, 0.91);

const LEVEL: f64 = 0.9;

/// One map sample: pointing offset (deg) and signal, typically Isc/DNI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapPoint {
    pub d_az: f64,
    pub d_el: f64,
    pub value: f64,
}

/// Node coordinates of a rectangular map, both ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapGrid {
    pub az: Vec<f64>,
    pub el: Vec<f64>,
}

impl MapGrid {
    /// Square frame centred on zero.
    pub fn regular(frame_deg: f64, step_deg: f64) -> Self {
        let n = (frame_deg / step_deg).round() as usize + 1;
        let nodes: Vec<f64> = (0..n).map(|i| -0.5 * frame_deg + i as f64 * step_deg).collect();
        Self { az: nodes.clone(), el: nodes }
    }

    /// Smallest regular grid holding every point, with the step taken as
    /// the smallest spacing between distinct coordinates.
    pub fn covering(points: &[MapPoint]) -> Result<Self, AnalysisError> {
        let axis = |f: fn(&MapPoint) -> f64| -> Option<Vec<f64>> {
            let mut xs: Vec<f64> = points.iter().map(f).collect();
            xs.sort_by(f64::total_cmp);
            xs.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
            let step = xs.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
            if !step.is_finite() {
                return None;
            }
            let (lo, hi) = (xs[0], xs[xs.len() - 1]);
            let n = ((hi - lo) / step).round() as usize + 1;
            Some((0..n).map(|i| lo + i as f64 * step).collect())
        };
        match (axis(|p| p.d_az), axis(|p| p.d_el)) {
            (Some(az), Some(el)) => Ok(Self { az, el }),
            _ if points.is_empty() => Err(AnalysisError::NoSamples),
            _ => Err(AnalysisError::TooFewMapSamples),
        }
    }

    fn snap(nodes: &[f64], x: f64) -> Option<usize> {
        let half = if nodes.len() > 1 { 0.5 * (nodes[1] - nodes[0]).abs() } else { f64::INFINITY };
        let (k, d) = nodes.iter().enumerate().map(|(k, n)| (k, (n - x).abs())).min_by(|a, b| a.1.total_cmp(&b.1))?;
        (d <= half * 0.999).then_some(k)
    }
}

/// Normalized map. `values` is row-major with rows along elevation;
/// `None` marks nodes that could not be measured or filled.
#[derive(Debug, Clone, PartialEq)]
pub struct AcceptanceMap {
    pub grid: MapGrid,
    pub values: Vec<Option<f64>>,
    pub measured: Vec<bool>,
}

impl AcceptanceMap {
    pub fn n_az(&self) -> usize {
        self.grid.az.len()
    }

    pub fn n_el(&self) -> usize {
        self.grid.el.len()
    }

    pub fn get(&self, i_az: usize, i_el: usize) -> Option<f64> {
        self.values[i_el * self.n_az() + i_az]
    }

    pub fn is_flagged(&self, i_az: usize, i_el: usize) -> bool {
        self.get(i_az, i_el).is_none()
    }

    /// Row-major first node holding the maximum.
    pub fn max_node(&self) -> Option<(usize, usize)> {
        let mut best: Option<(usize, f64)> = None;
        for (k, v) in self.values.iter().enumerate() {
            if let Some(v) = *v {
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((k, v));
                }
            }
        }
        best.map(|(k, _)| (k % self.n_az(), k / self.n_az()))
    }
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Counter-clockwise convex hull (monotone chain), collinear points dropped.
fn convex_hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn inside_hull(hull: &[(f64, f64)], p: (f64, f64), eps: f64) -> bool {
    (0..hull.len()).all(|k| cross(hull[k], hull[(k + 1) % hull.len()], p) >= -eps)
}

/// Grids the samples (averaging repeats), normalizes by the maximum and
/// fills missing nodes inside the convex hull of the data by averaging the
/// linear interpolations along the row and the column that bracket them.
pub fn build_map(points: &[MapPoint], grid: &MapGrid) -> Result<AcceptanceMap, AnalysisError> {
    let (n_az, n_el) = (grid.az.len(), grid.el.len());
    let mut sum = vec![0.0; n_az * n_el];
    let mut count = vec![0usize; n_az * n_el];
    for p in points.iter().filter(|p| p.value.is_finite()) {
        if let (Some(i), Some(j)) = (MapGrid::snap(&grid.az, p.d_az), MapGrid::snap(&grid.el, p.d_el)) {
            sum[j * n_az + i] += p.value;
            count[j * n_az + i] += 1;
        }
    }
    let measured: Vec<bool> = count.iter().map(|&c| c > 0).collect();
    let known: Vec<(f64, f64)> =
        (0..n_az * n_el).filter(|&k| measured[k]).map(|k| (grid.az[k % n_az], grid.el[k / n_az])).collect();
    if known.is_empty() {
        return Err(AnalysisError::NoSamples);
    }
    let hull = convex_hull(known.clone());
    if known.len() < 4 || hull.len() < 3 {
        return Err(AnalysisError::TooFewMapSamples);
    }
    let raw: Vec<Option<f64>> = (0..n_az * n_el).map(|k| measured[k].then(|| sum[k] / count[k] as f64)).collect();
    let max = raw.iter().flatten().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    if !(max > 0.0) {
        return Err(AnalysisError::Input("map has no positive signal".into()));
    }

    let step = grid.az.windows(2).chain(grid.el.windows(2)).map(|w| (w[1] - w[0]).abs()).fold(1.0, f64::min);
    let mut values = raw.clone();
    for j in 0..n_el {
        for i in 0..n_az {
            if measured[j * n_az + i] || !inside_hull(&hull, (grid.az[i], grid.el[j]), 1e-9 * step) {
                continue;
            }
            let row = bracket(&grid.az, i, |k| raw[j * n_az + k]);
            let col = bracket(&grid.el, j, |k| raw[k * n_az + i]);
            values[j * n_az + i] = match (row, col) {
                (Some(a), Some(b)) => Some(0.5 * (a + b)),
                (a, b) => a.or(b),
            };
        }
    }
    for v in values.iter_mut().flatten() {
        *v /= max;
    }
    Ok(AcceptanceMap { grid: grid.clone(), values, measured })
}

/// Linear interpolation at node `k` between the nearest known nodes on
/// either side.
fn bracket(nodes: &[f64], k: usize, value: impl Fn(usize) -> Option<f64>) -> Option<f64> {
    let lo = (0..k).rev().find_map(|m| value(m).map(|v| (nodes[m], v)))?;
    let hi = (k + 1..nodes.len()).find_map(|m| value(m).map(|v| (nodes[m], v)))?;
    let t = (nodes[k] - lo.0) / (hi.0 - lo.0);
    Some(lo.1 + t * (hi.1 - lo.1))
}

/// Closed level-set polygon, counter-clockwise in (az, el), first vertex
/// not repeated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    pub level: f64,
    pub polygon: Vec<(f64, f64)>,
    /// Grid position of the map maximum the polygon encloses.
    pub peak: (f64, f64),
}

impl Contour {
    pub fn signed_area(&self) -> f64 {
        let p = &self.polygon;
        0.5 * (0..p.len()).map(|k| cross((0.0, 0.0), p[k], p[(k + 1) % p.len()])).sum::<f64>()
    }

    /// Area centroid.
    pub fn centroid(&self) -> (f64, f64) {
        let p = &self.polygon;
        let a = self.signed_area();
        let (mut cx, mut cy) = (0.0, 0.0);
        for k in 0..p.len() {
            let (q, r) = (p[k], p[(k + 1) % p.len()]);
            let w = q.0 * r.1 - r.0 * q.1;
            cx += (q.0 + r.0) * w;
            cy += (q.1 + r.1) * w;
        }
        (cx / (6.0 * a), cy / (6.0 * a))
    }

    /// Half the bounding-box extent along az and el.
    pub fn semi_axes(&self) -> (f64, f64) {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in &self.polygon {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        (0.5 * (x1 - x0), 0.5 * (y1 - y0))
    }

    pub fn contains(&self, p: (f64, f64)) -> bool {
        point_in_polygon(&self.polygon, p)
    }
}

fn point_in_polygon(poly: &[(f64, f64)], p: (f64, f64)) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[j]);
        if (a.1 > p.1) != (b.1 > p.1) && p.0 < (b.0 - a.0) * (p.1 - a.1) / (b.1 - a.1) + a.0 {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Cell edge carrying a contour vertex: `H(i, j)` joins nodes (i, j) and
/// (i+1, j), `V(i, j)` joins (i, j) and (i, j+1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Edge {
    H(usize, usize),
    V(usize, usize),
}

/// Marching squares at 0.9 of the map maximum, returning the loop around
/// the maximum node.
pub fn contour90(map: &AcceptanceMap) -> Result<Contour, AnalysisError> {
    let (n_az, n_el) = (map.n_az(), map.n_el());
    let (imax, jmax) = map.max_node().ok_or(AnalysisError::NoSamples)?;
    let max = map.get(imax, jmax).unwrap_or(0.0);
    let min = map.values.iter().flatten().fold(f64::INFINITY, |m, &v| m.min(v));
    if !(max - min > 1e-12 * max.abs()) {
        return Err(AnalysisError::UniformMap);
    }
    let level = LEVEL * max;
    if region_escapes(map, (imax, jmax), level) {
        return Err(AnalysisError::ContourExceedsFrame);
    }

    let above = |i: usize, j: usize| map.get(i, j).map(|v| v >= level);
    let mut links: HashMap<Edge, Vec<Edge>> = HashMap::new();
    let mut link = |a: Edge, b: Edge| {
        links.entry(a).or_default().push(b);
        links.entry(b).or_default().push(a);
    };
    for j in 0..n_el.saturating_sub(1) {
        for i in 0..n_az.saturating_sub(1) {
            let corners = [above(i, j), above(i + 1, j), above(i + 1, j + 1), above(i, j + 1)];
            let [Some(c0), Some(c1), Some(c2), Some(c3)] = corners else { continue };
            let (bottom, right, top, left) = (Edge::H(i, j), Edge::V(i + 1, j), Edge::H(i, j + 1), Edge::V(i, j));
            let crossed: Vec<Edge> = [(c0 != c1, bottom), (c1 != c2, right), (c2 != c3, top), (c3 != c0, left)]
                .into_iter()
                .filter_map(|(x, e)| x.then_some(e))
                .collect();
            match crossed.len() {
                2 => link(crossed[0], crossed[1]),
                4 => {
                    let centre = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)]
                        .iter()
                        .map(|&(a, b)| map.get(a, b).unwrap_or(0.0))
                        .sum::<f64>()
                        / 4.0;
                    // Join the pair of edges around each corner that is cut off.
                    if (centre >= level) == c0 {
                        link(bottom, right);
                        link(top, left);
                    } else {
                        link(left, bottom);
                        link(right, top);
                    }
                }
                _ => {}
            }
        }
    }

    let vertex = |e: Edge| -> (f64, f64) {
        let ((a, b), (c, d)) = match e {
            Edge::H(i, j) => ((i, j), (i + 1, j)),
            Edge::V(i, j) => ((i, j), (i, j + 1)),
        };
        let (v0, v1) = (map.get(a, b).unwrap_or(0.0), map.get(c, d).unwrap_or(0.0));
        let t = (level - v0) / (v1 - v0);
        let (x0, y0) = (map.grid.az[a], map.grid.el[b]);
        let (x1, y1) = (map.grid.az[c], map.grid.el[d]);
        (x0 + t * (x1 - x0), y0 + t * (y1 - y0))
    };

    let peak = (map.grid.az[imax], map.grid.el[jmax]);
    let mut starts: Vec<Edge> = links.keys().copied().collect();
    starts.sort_by_key(|e| match *e {
        Edge::H(i, j) => (0, j, i),
        Edge::V(i, j) => (1, j, i),
    });
    let mut visited: HashMap<Edge, bool> = HashMap::new();
    for start in starts {
        if visited.contains_key(&start) {
            continue;
        }
        let mut chain = vec![start];
        visited.insert(start, true);
        let (mut prev, mut cur) = (None, start);
        let closed = loop {
            let Some(next) = links[&cur].iter().copied().find(|&n| Some(n) != prev) else { break false };
            if next == start {
                break true;
            }
            if visited.contains_key(&next) {
                break false;
            }
            visited.insert(next, true);
            chain.push(next);
            prev = Some(cur);
            cur = next;
        };
        if !closed || chain.len() < 3 {
            continue;
        }
        let polygon: Vec<(f64, f64)> = chain.into_iter().map(vertex).collect();
        if point_in_polygon(&polygon, peak) {
            let mut c = Contour { level, polygon, peak };
            if c.signed_area() < 0.0 {
                c.polygon.reverse();
            }
            return Ok(c);
        }
    }
    Err(AnalysisError::ContourExceedsFrame)
}

/// True when the connected region at or above `level` that holds `seed`
/// reaches the frame border or a node that could not be filled.
fn region_escapes(map: &AcceptanceMap, seed: (usize, usize), level: f64) -> bool {
    let (n_az, n_el) = (map.n_az(), map.n_el());
    let mut seen = vec![false; n_az * n_el];
    let mut stack = vec![seed];
    seen[seed.1 * n_az + seed.0] = true;
    while let Some((i, j)) = stack.pop() {
        if i == 0 || j == 0 || i + 1 == n_az || j + 1 == n_el {
            return true;
        }
        for (a, b) in [(i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)] {
            match map.get(a, b) {
                None => return true,
                Some(v) if v >= level && !seen[b * n_az + a] => {
                    seen[b * n_az + a] = true;
                    stack.push((a, b));
                }
                _ => {}
            }
        }
    }
    false
}

/// Angular distance of each sample from `centre`, with the azimuth offset
/// foreshortened by the cosine of the reference elevation.
pub fn project_angles(points: &[MapPoint], centre: (f64, f64), el_ref_deg: f64) -> Vec<(f64, f64)> {
    let c = el_ref_deg.to_radians().cos();
    points.iter().map(|p| (((p.d_az - centre.0) * c).hypot(p.d_el - centre.1), p.value)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleEstimate {
    pub angle: f64,
    /// Sample standard deviation of the in-band deviations.
    pub spread: f64,
    pub samples_used: usize,
}

/// Mean of the deviations whose normalized value lies in
/// [`ACCEPTANCE_BAND`]; values are normalized by their maximum.
pub fn acceptance_angle(samples: &[(f64, f64)]) -> Result<AngleEstimate, AnalysisError> {
    let max = samples.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Err(AnalysisError::NoSamples);
    }
    let (lo, hi) = ACCEPTANCE_BAND;
    let band: Vec<f64> = samples
        .iter()
        .filter(|s| {
            let n = s.1 / max;
            n >= lo && n <= hi
        })
        .map(|s| s.0)
        .collect();
    if band.is_empty() {
        return Err(AnalysisError::NoCrossing);
    }
    let n = band.len() as f64;
    let angle = band.iter().sum::<f64>() / n;
    let spread =
        if band.len() > 1 { (band.iter().map(|x| (x - angle).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    Ok(AngleEstimate { angle, spread, samples_used: band.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceResult {
    pub angle: f64,
    pub spread: f64,
    /// Contour of the first session.
    pub contour90: Contour,
    pub samples_used: usize,
    /// Contour centroid of every session.
    pub centres: Vec<(f64, f64)>,
    /// Pooled (deviation, normalized value) pairs.
    pub profile: Vec<(f64, f64)>,
}

/// Full acceptance pipeline over one or more mapping sessions, each given
/// with its reference elevation. Every session is normalized by its own
/// maximum and centred on its own contour before pooling.
pub fn analyze_sessions(sessions: &[(Vec<MapPoint>, f64)]) -> Result<AcceptanceResult, AnalysisError> {
    let mut contours = Vec::with_capacity(sessions.len());
    let mut profile = Vec::new();
    for (points, el_ref) in sessions {
        let grid = MapGrid::covering(points)?;
        let map = build_map(points, &grid)?;
        let contour = contour90(&map)?;
        let max = points.iter().map(|p| p.value).fold(f64::NEG_INFINITY, f64::max);
        let normalized: Vec<MapPoint> = points.iter().map(|p| MapPoint { value: p.value / max, ..*p }).collect();
        profile.extend(project_angles(&normalized, contour.centroid(), *el_ref));
        contours.push(contour);
    }
    let est = acceptance_angle(&profile)?;
    let centres = contours.iter().map(Contour::centroid).collect();
    Ok(AcceptanceResult {
        angle: est.angle,
        spread: est.spread,
        contour90: contours.into_iter().next().ok_or(AnalysisError::NoSamples)?,
        samples_used: est.samples_used,
        centres,
        profile,
    })
}
