//! Scene segmentation masks: one class index per cell.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

pub const NUM_CLASSES: usize = 5;
pub const ROAD: u8 = 0;
pub const CAR: u8 = 1;
pub const PEDESTRIAN: u8 = 2;
pub const SIDEWALK: u8 = 3;
pub const TRAFFIC_SIGN: u8 = 4;
/// Cell with no class information, e.g. after pixel dropout; encodes to an all-zero one-hot.
pub const VOID: u8 = 255;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MaskGrid {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<u8>,
}

impl MaskGrid {
    pub fn filled(width: usize, height: usize, class: u8) -> Self {
        MaskGrid {
            width,
            height,
            cells: vec![class; width * height],
        }
    }

    pub fn new(width: usize, height: usize, cells: Vec<u8>) -> Result<Self> {
        if cells.len() != width * height {
            return Err(CoreError::Data(format!(
                "mask of {width}x{height} needs {} cells, got {}",
                width * height,
                cells.len()
            )));
        }
        if let Some(bad) = cells.iter().find(|&&c| c as usize >= NUM_CLASSES && c != VOID) {
            return Err(CoreError::Data(format!("mask class index {bad} out of range")));
        }
        Ok(MaskGrid { width, height, cells })
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, class: u8) {
        self.cells[row * self.width + col] = class;
    }

    pub fn mirrored(&self) -> MaskGrid {
        let mut out = self.clone();
        for r in 0..self.height {
            let row = &mut out.cells[r * self.width..(r + 1) * self.width];
            row.reverse();
        }
        out
    }

    /// Fills the cells covering the pixel rectangle [x0, x1) x [y0, y1) of an image
    /// of the given size.
    pub fn paint_rect(&mut self, image: (f64, f64), x: (f64, f64), y: (f64, f64), class: u8) {
        let (iw, ih) = image;
        let c0 = ((x.0 / iw) * self.width as f64).floor().max(0.0) as usize;
        let c1 = ((x.1 / iw) * self.width as f64).ceil().min(self.width as f64) as usize;
        let r0 = ((y.0 / ih) * self.height as f64).floor().max(0.0) as usize;
        let r1 = ((y.1 / ih) * self.height as f64).ceil().min(self.height as f64) as usize;
        for r in r0..r1 {
            for c in c0..c1 {
                self.set(r, c, class);
            }
        }
    }

    /// Cell containing image point (x, y), if inside.
    pub fn cell_at(&self, image: (f64, f64), x: f64, y: f64) -> Option<(usize, usize)> {
        if x < 0.0 || y < 0.0 || x >= image.0 || y >= image.1 {
            return None;
        }
        let c = ((x / image.0) * self.width as f64).floor() as usize;
        let r = ((y / image.1) * self.height as f64).floor() as usize;
        Some((r.min(self.height - 1), c.min(self.width - 1)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskHeader {
    pub width: usize,
    pub height: usize,
    pub image_width: f64,
    pub image_height: f64,
    pub frames: Vec<i64>,
    /// Index into the grid blob for each entry of `frames`.
    pub grid_of_frame: Vec<usize>,
}

/// All masks of one scene, with identical grids stored once.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPack {
    pub width: usize,
    pub height: usize,
    pub image_width: f64,
    pub image_height: f64,
    pub grids: Vec<Arc<MaskGrid>>,
    by_frame: HashMap<i64, usize>,
    frames: Vec<i64>,
}

impl MaskPack {
    pub fn new(width: usize, height: usize, image_width: f64, image_height: f64) -> Self {
        MaskPack {
            width,
            height,
            image_width,
            image_height,
            grids: Vec::new(),
            by_frame: HashMap::new(),
            frames: Vec::new(),
        }
    }

    pub fn insert(&mut self, frame: i64, grid: MaskGrid) -> Result<()> {
        if grid.width != self.width || grid.height != self.height {
            return Err(CoreError::Data(format!(
                "mask for frame {frame} is {}x{}, pack is {}x{}",
                grid.width, grid.height, self.width, self.height
            )));
        }
        if self.by_frame.contains_key(&frame) {
            return Err(CoreError::Data(format!("duplicate mask for frame {frame}")));
        }
        let idx = match self.grids.iter().rposition(|g| **g == grid) {
            Some(i) => i,
            None => {
                self.grids.push(Arc::new(grid));
                self.grids.len() - 1
            }
        };
        self.by_frame.insert(frame, idx);
        self.frames.push(frame);
        Ok(())
    }

    pub fn get(&self, frame: i64) -> Option<&Arc<MaskGrid>> {
        self.by_frame.get(&frame).map(|&i| &self.grids[i])
    }

    pub fn frames(&self) -> &[i64] {
        &self.frames
    }

    pub fn header(&self) -> MaskHeader {
        MaskHeader {
            width: self.width,
            height: self.height,
            image_width: self.image_width,
            image_height: self.image_height,
            frames: self.frames.clone(),
            grid_of_frame: self.frames.iter().map(|f| self.by_frame[f]).collect(),
        }
    }

    /// Writes `<dir>/<scene>.json` and `<dir>/<scene>.bin`.
    pub fn save(&self, dir: &Path, scene: &str) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
        let json = dir.join(format!("{scene}.json"));
        let text = serde_json::to_string(&self.header()).map_err(|e| CoreError::Data(e.to_string()))?;
        fs::write(&json, text).map_err(|e| CoreError::io(&json, e))?;
        let bin = dir.join(format!("{scene}.bin"));
        let mut blob = Vec::with_capacity(self.grids.len() * self.width * self.height);
        for g in &self.grids {
            blob.extend_from_slice(&g.cells);
        }
        fs::write(&bin, blob).map_err(|e| CoreError::io(&bin, e))
    }

    pub fn load(dir: &Path, scene: &str) -> Result<Self> {
        let json = dir.join(format!("{scene}.json"));
        let text = fs::read_to_string(&json).map_err(|e| CoreError::io(&json, e))?;
        let header: MaskHeader =
            serde_json::from_str(&text).map_err(|e| CoreError::Data(format!("{}: {e}", json.display())))?;
        let bin = dir.join(format!("{scene}.bin"));
        let blob = fs::read(&bin).map_err(|e| CoreError::io(&bin, e))?;
        let cell_count = header.width * header.height;
        if cell_count == 0 || blob.len() % cell_count != 0 {
            return Err(CoreError::Data(format!("{}: size {} is not a whole number of grids", bin.display(), blob.len())));
        }
        if header.frames.len() != header.grid_of_frame.len() {
            return Err(CoreError::Data(format!("{}: frames and grid_of_frame differ in length", json.display())));
        }
        let mut pack = MaskPack::new(header.width, header.height, header.image_width, header.image_height);
        for chunk in blob.chunks(cell_count) {
            pack.grids.push(Arc::new(MaskGrid::new(header.width, header.height, chunk.to_vec())?));
        }
        for (&frame, &g) in header.frames.iter().zip(&header.grid_of_frame) {
            if g >= pack.grids.len() {
                return Err(CoreError::Data(format!("{}: grid index {g} out of range", json.display())));
            }
            pack.by_frame.insert(frame, g);
            pack.frames.push(frame);
        }
        Ok(pack)
    }
}
