//! Synthetic urban exposure fields.
//!
//! Each transmitter radiates a free-space field `sqrt(30 P) / d` that loses a
//! fixed number of decibels every time the straight path to the receiving
//! cell enters a building. Transmitter contributions are combined as a
//! root-sum-square of magnitudes. Building cells carry no exposure.

use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::grid::{BuildingMap, ExposureGrid, GridDims, SensorReading, SensorSet};

pub const MAX_TRANSMITTERS: usize = 8;
pub const DEFAULT_POWER_W: f64 = 120.0;
pub const DEFAULT_FREQUENCY_HZ: f64 = 5.89e9;

/// Receiver height above ground. The 2-D model has no vertical axis, so this
/// is carried as metadata only.
pub const SENSOR_HEIGHT_M: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transmitter {
    pub row: usize,
    pub col: usize,
    pub power_w: f64,
    pub frequency_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationConfig {
    pub wall_loss_db: f64,
    pub min_distance_cells: f64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            wall_loss_db: 10.0,
            min_distance_cells: 1.0,
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.wall_loss_db.is_finite() && self.wall_loss_db >= 0.0) {
            return Err(Error::validation(format!(
                "wall loss must be >= 0 dB, got {}",
                self.wall_loss_db
            )));
        }
        if !(self.min_distance_cells.is_finite() && self.min_distance_cells > 0.0) {
            return Err(Error::validation(format!(
                "minimum distance must be positive, got {}",
                self.min_distance_cells
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    dims: GridDims,
    buildings: BuildingMap,
    transmitters: Vec<Transmitter>,
    seed: u64,
}

impl Scene {
    pub fn new(
        buildings: BuildingMap,
        transmitters: Vec<Transmitter>,
        seed: u64,
    ) -> Result<Self> {
        let dims = buildings.dims();
        if transmitters.is_empty() || transmitters.len() > MAX_TRANSMITTERS {
            return Err(Error::validation(format!(
                "scene needs 1..={MAX_TRANSMITTERS} transmitters, got {}",
                transmitters.len()
            )));
        }
        for (i, t) in transmitters.iter().enumerate() {
            if t.row >= dims.rows || t.col >= dims.cols {
                return Err(Error::validation(format!(
                    "transmitter {i} at ({}, {}) is outside the {}x{} grid",
                    t.row, t.col, dims.rows, dims.cols
                )));
            }
            if !(t.power_w.is_finite() && t.power_w > 0.0) {
                return Err(Error::validation(format!(
                    "transmitter {i} power must be positive, got {}",
                    t.power_w
                )));
            }
            if !(t.frequency_hz.is_finite() && t.frequency_hz > 0.0) {
                return Err(Error::validation(format!(
                    "transmitter {i} frequency must be positive, got {}",
                    t.frequency_hz
                )));
            }
            if buildings.get(t.row, t.col) {
                return Err(Error::validation(format!(
                    "transmitter {i} at ({}, {}) is inside a building",
                    t.row, t.col
                )));
            }
        }
        Ok(Self {
            dims,
            buildings,
            transmitters,
            seed,
        })
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn buildings(&self) -> &BuildingMap {
        &self.buildings
    }

    pub fn transmitters(&self) -> &[Transmitter] {
        &self.transmitters
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn open_cells(&self) -> usize {
        self.dims.len() - self.buildings.popcount()
    }

    /// Serializes everything except the building raster, which is referenced
    /// by file name.
    pub fn to_config(&self, buildings_file: &str) -> KvConfig {
        let mut cfg = KvConfig::new();
        cfg.set("scene.rows", self.dims.rows);
        cfg.set("scene.cols", self.dims.cols);
        cfg.set("scene.cell_size_m", self.dims.cell_size_m);
        cfg.set("scene.seed", self.seed);
        cfg.set("scene.buildings_file", buildings_file);
        cfg.set("scene.sensor_height_m", SENSOR_HEIGHT_M);
        cfg.set("scene.tx.count", self.transmitters.len());
        for (i, t) in self.transmitters.iter().enumerate() {
            cfg.set(
                format!("scene.tx.{i}"),
                format!("{},{},{},{}", t.row, t.col, t.power_w, t.frequency_hz),
            );
        }
        cfg
    }

    /// Loads a scene written by [`Scene::to_config`]; the building file is
    /// resolved relative to `base_dir`.
    pub fn from_config(cfg: &KvConfig, base_dir: &Path) -> Result<Self> {
        let need = |key: &str| Error::Config {
            key: key.to_string(),
            msg: "required".into(),
        };
        let file: String = cfg
            .get("scene.buildings_file")?
            .ok_or_else(|| need("scene.buildings_file"))?;
        let buildings = BuildingMap::read(base_dir.join(&file))?;
        let dims = buildings.dims();
        if let Some(rows) = cfg.get::<usize>("scene.rows")? {
            if rows != dims.rows {
                return Err(Error::Config {
                    key: "scene.rows".into(),
                    msg: format!("{rows} disagrees with building raster ({})", dims.rows),
                });
            }
        }
        if let Some(cols) = cfg.get::<usize>("scene.cols")? {
            if cols != dims.cols {
                return Err(Error::Config {
                    key: "scene.cols".into(),
                    msg: format!("{cols} disagrees with building raster ({})", dims.cols),
                });
            }
        }
        let count: usize = cfg.get("scene.tx.count")?.ok_or_else(|| need("scene.tx.count"))?;
        let mut transmitters = Vec::with_capacity(count);
        for i in 0..count {
            let key = format!("scene.tx.{i}");
            let vals: Vec<f64> = cfg.get_list(&key)?.ok_or_else(|| need(&key))?;
            if vals.len() != 4 || vals[0] < 0.0 || vals[1] < 0.0 {
                return Err(Error::Config {
                    key,
                    msg: "expected `row,col,power_w,frequency_hz`".into(),
                });
            }
            transmitters.push(Transmitter {
                row: vals[0] as usize,
                col: vals[1] as usize,
                power_w: vals[2],
                frequency_hz: vals[3],
            });
        }
        let seed = cfg.get_or("scene.seed", 0u64)?;
        Scene::new(buildings, transmitters, seed)
    }
}

/// Parameters of the random urban scene generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub dims: GridDims,
    pub transmitters: usize,
    pub power_w: f64,
    pub frequency_hz: f64,
    pub buildings: usize,
    pub seed: u64,
}

impl SceneSpec {
    pub fn new(dims: GridDims, seed: u64) -> Self {
        Self {
            dims,
            transmitters: 2,
            power_w: DEFAULT_POWER_W,
            frequency_hz: DEFAULT_FREQUENCY_HZ,
            buildings: 16,
            seed,
        }
    }

    /// Axis-aligned rectangular blocks at random positions, then
    /// transmitters on open cells away from the border and from each other.
    pub fn generate(&self) -> Result<Scene> {
        let dims = self.dims;
        if self.transmitters == 0 || self.transmitters > MAX_TRANSMITTERS {
            return Err(Error::validation(format!(
                "scene needs 1..={MAX_TRANSMITTERS} transmitters, got {}",
                self.transmitters
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut buildings = BuildingMap::empty(dims);
        let side = dims.rows.min(dims.cols);
        let min_len = (side / 20).max(2);
        let max_len = (side / 8).max(min_len + 1);
        for _ in 0..self.buildings {
            let h = rng.gen_range(min_len..=max_len).min(dims.rows);
            let w = rng.gen_range(min_len..=max_len).min(dims.cols);
            let r0 = rng.gen_range(0..=dims.rows - h);
            let c0 = rng.gen_range(0..=dims.cols - w);
            for r in r0..r0 + h {
                for c in c0..c0 + w {
                    buildings.set(r, c, true);
                }
            }
        }

        let margin = side / 8;
        let min_sep = (side / 4) as f64;
        let mut transmitters: Vec<Transmitter> = Vec::with_capacity(self.transmitters);
        let mut attempts = 0usize;
        while transmitters.len() < self.transmitters {
            attempts += 1;
            if attempts > 100_000 {
                return Err(Error::validation(
                    "could not place transmitters on open cells; too many buildings",
                ));
            }
            let row = rng.gen_range(margin..dims.rows - margin);
            let col = rng.gen_range(margin..dims.cols - margin);
            if buildings.get(row, col) {
                continue;
            }
            let spaced = transmitters.iter().all(|t| {
                let dr = t.row as f64 - row as f64;
                let dc = t.col as f64 - col as f64;
                (dr * dr + dc * dc).sqrt() >= min_sep
            });
            // Separation is a preference; give up on it after many tries.
            if !spaced && attempts < 10_000 {
                continue;
            }
            transmitters.push(Transmitter {
                row,
                col,
                power_w: self.power_w,
                frequency_hz: self.frequency_hz,
            });
        }
        Scene::new(buildings, transmitters, self.seed)
    }
}

/// Cells touched by the segment between two cell centres, including both
/// side cells where the segment passes exactly through a grid corner.
/// The sequence for `(b, a)` is the reverse of the one for `(a, b)`.
pub fn supercover_cells(from: (usize, usize), to: (usize, usize)) -> Vec<(usize, usize)> {
    if from > to {
        let mut cells = supercover_cells(to, from);
        cells.reverse();
        return cells;
    }
    let (r0, c0) = (from.0 as i64, from.1 as i64);
    let (r1, c1) = (to.0 as i64, to.1 as i64);
    let (ny, nx) = ((r1 - r0).abs(), (c1 - c0).abs());
    let (sy, sx) = ((r1 - r0).signum(), (c1 - c0).signum());
    let (mut r, mut c) = (r0, c0);
    let (mut iy, mut ix) = (0i64, 0i64);
    let mut cells = Vec::with_capacity((nx + ny + 1) as usize);
    cells.push((r as usize, c as usize));
    while ix < nx || iy < ny {
        // Compare the segment parameters of the next vertical and horizontal
        // grid-line crossings: (ix + 1/2) / nx against (iy + 1/2) / ny.
        let decision = (1 + 2 * ix) * ny - (1 + 2 * iy) * nx;
        if decision == 0 {
            cells.push((r as usize, (c + sx) as usize));
            cells.push(((r + sy) as usize, c as usize));
            r += sy;
            c += sx;
            ix += 1;
            iy += 1;
        } else if decision < 0 {
            c += sx;
            ix += 1;
        } else {
            r += sy;
            iy += 1;
        }
        cells.push((r as usize, c as usize));
    }
    cells
}

/// Number of walls on the straight path between two cells.
///
/// Along the traversal, counts open-to-building entries and
/// building-to-open exits and returns the larger; when the path starts on an
/// open cell this is the number of building entries, and the count is
/// symmetric in its arguments.
pub fn count_wall_crossings(buildings: &BuildingMap, from: (usize, usize), to: (usize, usize)) -> usize {
    let cells = supercover_cells(from, to);
    let mut entries = 0;
    let mut exits = 0;
    let mut prev = buildings.get(cells[0].0, cells[0].1);
    for &(r, c) in &cells[1..] {
        let cur = buildings.get(r, c);
        match (prev, cur) {
            (false, true) => entries += 1,
            (true, false) => exits += 1,
            _ => {}
        }
        prev = cur;
    }
    entries.max(exits)
}

/// Free-space field magnitude in V/m at `distance_m` from an isotropic
/// transmitter of `power_w`.
pub fn free_space_field(power_w: f64, distance_m: f64) -> f64 {
    (30.0 * power_w).sqrt() / distance_m
}

pub fn generate_ground_truth(scene: &Scene, cfg: &PropagationConfig) -> Result<ExposureGrid> {
    cfg.validate()?;
    let dims = scene.dims;
    let cell = dims.cell_size_m;
    let d_min = cfg.min_distance_cells * cell;
    let buildings = &scene.buildings;
    let amplitudes: Vec<f64> = scene
        .transmitters
        .iter()
        .map(|t| (30.0 * t.power_w).sqrt())
        .collect();
    ExposureGrid::from_fn(dims, |r, c| {
        if buildings.get(r, c) {
            return 0.0;
        }
        let mut power_sum = 0.0;
        for (t, amp) in scene.transmitters.iter().zip(&amplitudes) {
            let dr = (r as f64 - t.row as f64) * cell;
            let dc = (c as f64 - t.col as f64) * cell;
            let d = (dr * dr + dc * dc).sqrt().max(d_min);
            let walls = count_wall_crossings(buildings, (t.row, t.col), (r, c));
            let e = amp / d * 10f64.powf(-cfg.wall_loss_db * walls as f64 / 20.0);
            power_sum += e * e;
        }
        power_sum.sqrt()
    })
}

/// Draws `count` distinct open cells uniformly without replacement and reads
/// the ground truth there. Readings are returned in row-major order.
pub fn place_sensors(
    scene: &Scene,
    truth: &ExposureGrid,
    count: usize,
    seed: u64,
) -> Result<SensorSet> {
    let dims = scene.dims;
    if !truth.dims().same_shape(&dims) {
        return Err(Error::shape(
            "place_sensors",
            format!(
                "ground truth {}x{} vs scene {}x{}",
                truth.dims().rows,
                truth.dims().cols,
                dims.rows,
                dims.cols
            ),
        ));
    }
    let open: Vec<usize> = (0..dims.len())
        .filter(|&i| !scene.buildings.bits()[i])
        .collect();
    if count > open.len() {
        return Err(Error::validation(format!(
            "{count} sensors requested but only {} open cells",
            open.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = sample(&mut rng, open.len(), count)
        .into_iter()
        .map(|k| open[k])
        .collect();
    picked.sort_unstable();
    let readings = picked
        .into_iter()
        .map(|i| SensorReading {
            row: i / dims.cols,
            col: i % dims.cols,
            value_vm: truth.values()[i],
        })
        .collect();
    SensorSet::new(dims, readings)
}
