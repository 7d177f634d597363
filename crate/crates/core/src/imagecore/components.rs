//! Connected-component labeling of binary masks.
//!
//! Two-pass labeling with union-find over provisional labels. Final labels
//! are assigned in row-major order of each component's first pixel.

use serde::{Deserialize, Serialize};

use super::raster::{BinaryMask, Raster};
use crate::prompting::BoundingBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Connectivity {
    #[serde(rename = "4")]
    Four,
    #[default]
    #[serde(rename = "8")]
    Eight,
}

impl Connectivity {
    pub fn from_count(n: u32) -> Option<Self> {
        match n {
            4 => Some(Connectivity::Four),
            8 => Some(Connectivity::Eight),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectedComponent {
    /// 1-based label in first-encounter order.
    pub label: u32,
    pub pixel_count: u64,
    /// Tight inclusive bounding box.
    pub bbox: BoundingBox,
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new() -> Self {
        // index 0 is the background sentinel
        Self { parent: vec![0] }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi as usize] = lo;
        lo
    }
}

/// Label image (0 = background, 1..=K components) plus component stats.
pub fn label(mask: &BinaryMask, connectivity: Connectivity) -> (Vec<u32>, Vec<ConnectedComponent>) {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let bits = mask.bits();
    let mut labels = vec![0u32; w * h];
    let mut sets = DisjointSet::new();

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !bits[i] {
                continue;
            }
            let mut current = 0u32;
            let merge = |current: &mut u32, neighbor: u32, sets: &mut DisjointSet| {
                if neighbor == 0 {
                    return;
                }
                *current = if *current == 0 {
                    sets.find(neighbor)
                } else {
                    sets.union(*current, neighbor)
                };
            };
            if x > 0 {
                merge(&mut current, labels[i - 1], &mut sets);
            }
            if y > 0 {
                merge(&mut current, labels[i - w], &mut sets);
                if connectivity == Connectivity::Eight {
                    if x > 0 {
                        merge(&mut current, labels[i - w - 1], &mut sets);
                    }
                    if x + 1 < w {
                        merge(&mut current, labels[i - w + 1], &mut sets);
                    }
                }
            }
            labels[i] = if current == 0 { sets.make() } else { current };
        }
    }

    // Resolve roots and renumber in order of first appearance.
    let mut remap = vec![0u32; sets.parent.len()];
    let mut components: Vec<ConnectedComponent> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if labels[i] == 0 {
                continue;
            }
            let root = sets.find(labels[i]) as usize;
            if remap[root] == 0 {
                components.push(ConnectedComponent {
                    label: components.len() as u32 + 1,
                    pixel_count: 0,
                    bbox: BoundingBox::new(x as u32, y as u32, x as u32, y as u32),
                });
                remap[root] = components.len() as u32;
            }
            let id = remap[root];
            labels[i] = id;
            let c = &mut components[id as usize - 1];
            c.pixel_count += 1;
            c.bbox = c.bbox.hull(&BoundingBox::new(x as u32, y as u32, x as u32, y as u32));
        }
    }
    (labels, components)
}

pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> Vec<ConnectedComponent> {
    label(mask, connectivity).1
}

/// Foreground pixels connected to (`x`, `y`) that satisfy `accept`,
/// restricted to the inclusive `bounds`. Empty if the start pixel itself
/// is rejected.
pub(crate) fn flood_region(
    width: u32,
    height: u32,
    starts: &[(u32, u32)],
    bounds: &BoundingBox,
    connectivity: Connectivity,
    mut accept: impl FnMut(u32, u32) -> bool,
) -> BinaryMask {
    let mut region = BinaryMask::new(width, height);
    let mut stack: Vec<(u32, u32)> = Vec::new();
    for &(x, y) in starts {
        if bounds.contains(x, y) && !region.get(x, y) && accept(x, y) {
            region.set(x, y, true);
            stack.push((x, y));
        }
    }
    let offsets: &[(i64, i64)] = match connectivity {
        Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
        Connectivity::Eight => &[(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)],
    };
    while let Some((x, y)) = stack.pop() {
        for &(dx, dy) in offsets {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if nx < bounds.x_min as i64 || ny < bounds.y_min as i64 || nx > bounds.x_max as i64 || ny > bounds.y_max as i64 {
                continue;
            }
            let (nx, ny) = (nx as u32, ny as u32);
            if !region.get(nx, ny) && accept(nx, ny) {
                region.set(nx, ny, true);
                stack.push((nx, ny));
            }
        }
    }
    region
}
