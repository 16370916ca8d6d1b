//! Ground-truth tooling: threshold masks, connected components, pixel-edge
//! contours and nearest-vent source attribution.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::raster::{Field, Mask};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Below,
    Above,
}

/// 1 where the value is strictly beyond `threshold` in `direction`.
pub fn mask_from_threshold(field: &Field, threshold: f32, direction: Direction) -> Mask {
    Mask::from_fn(field.width(), field.height(), |x, y| {
        let v = field.get(x, y);
        u8::from(match direction {
            Direction::Below => v < threshold,
            Direction::Above => v > threshold,
        })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    #[serde(rename = "4")]
    Four,
    #[serde(rename = "8")]
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(0, -1), (-1, 0), (1, 0), (0, 1)],
            Connectivity::Eight => &[
                (-1, -1),
                (0, -1),
                (1, -1),
                (-1, 0),
                (1, 0),
                (-1, 1),
                (0, 1),
                (1, 1),
            ],
        }
    }
}

impl TryFrom<u8> for Connectivity {
    type Error = Error;

    fn try_from(n: u8) -> Result<Self> {
        match n {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            other => Err(Error::InvalidArgument(format!("connectivity must be 4 or 8, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub id: u32,
    /// Member pixels `(x, y)` in row-major order.
    pub pixels: Vec<(usize, usize)>,
    pub area_px: usize,
    /// Inclusive `(x0, y0, x1, y1)`.
    pub bbox: (usize, usize, usize, usize),
    /// Mean pixel coordinate.
    pub centroid: (f64, f64),
}

/// Maximal connected sets of nonzero pixels, numbered `1..=N` in raster
/// order of their first pixel.
pub fn connected_components(mask: &Mask, connectivity: Connectivity) -> Vec<Component> {
    let (w, h) = mask.shape();
    let mut seen = vec![false; w * h];
    let mut components = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if seen[start] || mask.labels()[start] == 0 {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut members = Vec::new();
        while let Some(idx) = queue.pop_front() {
            members.push(idx);
            let (x, y) = ((idx % w) as isize, (idx / w) as isize);
            for &(dx, dy) in connectivity.offsets() {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let n = ny as usize * w + nx as usize;
                if !seen[n] && mask.labels()[n] != 0 {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
        members.sort_unstable();
        let pixels: Vec<(usize, usize)> = members.iter().map(|&i| (i % w, i / w)).collect();
        let bbox = pixels.iter().fold(
            (usize::MAX, usize::MAX, 0, 0),
            |(x0, y0, x1, y1), &(x, y)| (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
        );
        let n = pixels.len() as f64;
        let centroid = (
            pixels.iter().map(|p| p.0 as f64).sum::<f64>() / n,
            pixels.iter().map(|p| p.1 as f64).sum::<f64>() / n,
        );
        components.push(Component {
            id: components.len() as u32 + 1,
            area_px: pixels.len(),
            pixels,
            bbox,
            centroid,
        });
    }
    components
}

/// Closed outer boundary of one component, along pixel edges. Pixel `(x, y)`
/// covers the square `[x, x+1] x [y, y+1]`; vertices are the corners where
/// the boundary turns and the first vertex is repeated at the end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    pub component_id: u32,
    pub vertices: Vec<(i64, i64)>,
}

impl Contour {
    /// Shoelace area. Positive for the traversal direction used here
    /// (clockwise on screen, i.e. with `y` pointing down).
    pub fn area(&self) -> f64 {
        let twice: i64 = self
            .vertices
            .windows(2)
            .map(|p| p[0].0 * p[1].1 - p[1].0 * p[0].1)
            .sum();
        twice as f64 / 2.0
    }

    pub fn perimeter(&self) -> i64 {
        self.vertices
            .windows(2)
            .map(|p| (p[1].0 - p[0].0).abs() + (p[1].1 - p[0].1).abs())
            .sum()
    }
}

/// Unit steps in screen coordinates: east, south, west, north.
const STEPS: [(i64, i64); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

/// Traces the outer boundary of every 8-connected component.
///
/// Each trace starts on the top edge of the component's first pixel in
/// raster order, which always lies on the outer boundary, and walks the
/// pixel cracks with the component on its right. At a diagonal pinch the
/// walk turns towards the diagonal neighbour, matching 8-connectivity.
pub fn extract_contours(mask: &Mask) -> Vec<Contour> {
    let (w, h) = mask.shape();
    let components = connected_components(mask, Connectivity::Eight);
    let mut owner = vec![0u32; w * h];
    for c in &components {
        for &(x, y) in &c.pixels {
            owner[y * w + x] = c.id;
        }
    }
    components
        .iter()
        .map(|c| {
            let inside = |x: i64, y: i64| {
                x >= 0 && y >= 0 && x < w as i64 && y < h as i64 && owner[y as usize * w + x as usize] == c.id
            };
            let (sx, sy) = c.pixels[0];
            let start = (sx as i64, sy as i64);
            let mut pos = start;
            let mut dir = 0usize;
            let mut vertices = vec![start];
            loop {
                let (dx, dy) = STEPS[dir];
                pos = (pos.0 + dx, pos.1 + dy);
                // Pixels ahead of vertex `pos`, to the left and right of `dir`.
                let (ahead_left, ahead_right) = match dir {
                    0 => ((pos.0, pos.1 - 1), (pos.0, pos.1)),
                    1 => ((pos.0, pos.1), (pos.0 - 1, pos.1)),
                    2 => ((pos.0 - 1, pos.1), (pos.0 - 1, pos.1 - 1)),
                    _ => ((pos.0 - 1, pos.1 - 1), (pos.0, pos.1 - 1)),
                };
                let next = if inside(ahead_left.0, ahead_left.1) {
                    (dir + 3) % 4
                } else if inside(ahead_right.0, ahead_right.1) {
                    dir
                } else {
                    (dir + 1) % 4
                };
                if pos == start && next == 0 {
                    vertices.push(start);
                    break;
                }
                if next != dir {
                    vertices.push(pos);
                }
                dir = next;
            }
            Contour {
                component_id: c.id,
                vertices,
            }
        })
        .collect()
}

/// Named emission point in pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vent {
    pub name: String,
    pub xy: (f64, f64),
}

/// Labels every component with `index + 1` of the vent nearest to its
/// centroid; ties go to the lower index.
pub fn assign_sources(
    components: &[Component],
    vents: &[Vent],
    width: usize,
    height: usize,
) -> Result<Mask> {
    if vents.is_empty() {
        return Err(Error::InvalidArgument("at least one vent location is required".into()));
    }
    if vents.len() > 255 {
        return Err(Error::InvalidArgument("at most 255 vents fit in a u8 mask".into()));
    }
    let mut out = Mask::zeros(width, height);
    for c in components {
        let (cx, cy) = c.centroid;
        let mut best = (0usize, f64::INFINITY);
        for (i, v) in vents.iter().enumerate() {
            let d = (v.xy.0 - cx).hypot(v.xy.1 - cy);
            if d < best.1 {
                best = (i, d);
            }
        }
        for &(x, y) in &c.pixels {
            if x >= width || y >= height {
                return Err(Error::InvalidArgument(format!(
                    "component {} pixel ({x}, {y}) outside {width}x{height}",
                    c.id
                )));
            }
            out.set(x, y, best.0 as u8 + 1);
        }
    }
    Ok(out)
}

/// GeoJSON-style FeatureCollection of polygons in pixel coordinates.
pub fn contours_to_geojson(contours: &[Contour]) -> serde_json::Value {
    let features: Vec<serde_json::Value> = contours
        .iter()
        .map(|c| {
            serde_json::json!({
                "type": "Feature",
                "properties": { "component_id": c.component_id, "area_px": c.area() },
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [c.vertices.iter().map(|&(x, y)| [x, y]).collect::<Vec<_>>()],
                },
            })
        })
        .collect();
    serde_json::json!({ "type": "FeatureCollection", "features": features })
}
