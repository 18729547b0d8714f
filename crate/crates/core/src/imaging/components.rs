use super::{rle_decode, BinaryMask, BoolGrid, Grid};

/// One 8-connected foreground region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    /// Label in `1..=K`.
    pub label: u32,
    pub area: usize,
    /// Row-major linear indices of member pixels, ascending.
    pub pixels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Labeling {
    /// 0 for background, otherwise the component label.
    pub labels: Grid<u32>,
    pub components: Vec<Component>,
}

impl Labeling {
    pub fn count(&self) -> usize {
        self.components.len()
    }
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
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

/// Label 8-connected foreground regions of a mask.
///
/// Labels follow raster order of each component's first pixel.
pub fn connected_components_8(mask: &BinaryMask) -> Labeling {
    let grid = rle_decode(mask).expect("validated mask decodes");
    label_grid(&grid)
}

pub(crate) fn label_grid(grid: &BoolGrid) -> Labeling {
    let (h, w) = grid.dims();
    let mut provisional = vec![u32::MAX; h * w];
    let mut sets = DisjointSet { parent: Vec::new() };

    // First pass: provisional labels from the already-visited neighbours
    // (W, NW, N, NE).
    for row in 0..h {
        for col in 0..w {
            if !grid.at(row, col) {
                continue;
            }
            let mut label: Option<u32> = None;
            let mut visit = |r: usize, c: usize, label: &mut Option<u32>| {
                let l = provisional[r * w + c];
                if l != u32::MAX {
                    *label = Some(match *label {
                        None => sets.find(l),
                        Some(cur) => sets.union(cur, l),
                    });
                }
            };
            if col > 0 {
                visit(row, col - 1, &mut label);
            }
            if row > 0 {
                if col > 0 {
                    visit(row - 1, col - 1, &mut label);
                }
                visit(row - 1, col, &mut label);
                if col + 1 < w {
                    visit(row - 1, col + 1, &mut label);
                }
            }
            provisional[row * w + col] = match label {
                Some(l) => l,
                None => sets.make(),
            };
        }
    }

    // Second pass: resolve to roots and renumber densely in raster order.
    let mut final_of_root = vec![0u32; sets.parent.len()];
    let mut labels = Grid::filled(h, w, 0u32);
    let mut components: Vec<Component> = Vec::new();
    for (idx, &p) in provisional.iter().enumerate() {
        if p == u32::MAX {
            continue;
        }
        let root = sets.find(p) as usize;
        if final_of_root[root] == 0 {
            components.push(Component {
                label: components.len() as u32 + 1,
                area: 0,
                pixels: Vec::new(),
            });
            final_of_root[root] = components.len() as u32;
        }
        let label = final_of_root[root];
        labels.data_mut()[idx] = label;
        let comp = &mut components[label as usize - 1];
        comp.area += 1;
        comp.pixels.push(idx);
    }
    Labeling { labels, components }
}
