use crate::scene::Scene;

/// Inclusive pixel rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PixelRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelRect {
    pub fn width(&self) -> usize {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0 + 1
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }
}

/// Canvas pixels covered by the padded rotation-invariant square around
/// primitive `index`, or `None` when it misses the canvas entirely.
pub fn conservative_bbox(scene: &Scene, index: usize, padding: f32) -> Option<PixelRect> {
    let p = &scene.primitives[index];
    // Slight inflation keeps rounding in the inverse map from leaking texels past the box.
    let r = scene.conservative_radius(index, padding) * (1.0 + 1e-4);
    pixel_span(p.x - r, p.x + r, scene.canvas_w).and_then(|(x0, x1)| {
        pixel_span(p.y - r, p.y + r, scene.canvas_h).map(|(y0, y1)| PixelRect { x0, y0, x1, y1 })
    })
}

fn pixel_span(lo: f32, hi: f32, extent: usize) -> Option<(usize, usize)> {
    let lo = lo.ceil().max(0.0);
    let hi = hi.floor().min(extent as f32 - 1.0);
    if !(lo <= hi) {
        return None;
    }
    Some((lo as usize, hi as usize))
}

/// Per-tile primitive lists, each sorted front-to-back.
#[derive(Clone, Debug, PartialEq)]
pub struct TileBins {
    pub tile_size: usize,
    pub tiles_x: usize,
    pub tiles_y: usize,
    pub padding: f32,
    pub canvas_w: usize,
    pub canvas_h: usize,
    lists: Vec<Vec<u32>>,
}

impl TileBins {
    pub fn tile_count(&self) -> usize {
        self.lists.len()
    }

    pub fn list(&self, tile: usize) -> &[u32] {
        &self.lists[tile]
    }

    pub fn lists(&self) -> &[Vec<u32>] {
        &self.lists
    }

    /// Pixel rectangle of a tile, clipped to the canvas.
    pub fn tile_rect(&self, tile: usize) -> PixelRect {
        let tx = tile % self.tiles_x;
        let ty = tile / self.tiles_x;
        let x0 = tx * self.tile_size;
        let y0 = ty * self.tile_size;
        PixelRect {
            x0,
            y0,
            x1: (x0 + self.tile_size).min(self.canvas_w) - 1,
            y1: (y0 + self.tile_size).min(self.canvas_h) - 1,
        }
    }

    pub fn total_assignments(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }
}

/// Assigns every primitive to each tile its padded conservative square touches.
pub fn bin_tiles(scene: &Scene, tile_size: usize, padding: f32) -> TileBins {
    assert!(tile_size > 0, "tile size must be positive");
    let tiles_x = scene.canvas_w.div_ceil(tile_size);
    let tiles_y = scene.canvas_h.div_ceil(tile_size);
    let mut lists = vec![Vec::new(); tiles_x * tiles_y];
    for index in scene.depth_order() {
        let Some(rect) = conservative_bbox(scene, index as usize, padding) else {
            continue;
        };
        for ty in rect.y0 / tile_size..=rect.y1 / tile_size {
            for tx in rect.x0 / tile_size..=rect.x1 / tile_size {
                lists[ty * tiles_x + tx].push(index);
            }
        }
    }
    TileBins { tile_size, tiles_x, tiles_y, padding, canvas_w: scene.canvas_w, canvas_h: scene.canvas_h, lists }
}
