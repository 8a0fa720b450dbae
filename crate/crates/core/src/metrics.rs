//! Error metrics and classical interpolation baselines.

use crate::error::{Error, Result};
use crate::grid::{BuildingMap, ExposureGrid, GridDims, ObservationMask, SensorSet};

pub const DEFAULT_IDW_POWER: f64 = 2.0;

fn check_pair(op: &'static str, a: &ExposureGrid, b: &ExposureGrid) -> Result<()> {
    if !a.dims().same_shape(&b.dims()) {
        return Err(Error::shape(
            op,
            format!(
                "{}x{} vs {}x{}",
                a.dims().rows,
                a.dims().cols,
                b.dims().rows,
                b.dims().cols
            ),
        ));
    }
    Ok(())
}

fn eval_count(op: &'static str, reference: &ExposureGrid, mask: &ObservationMask) -> Result<usize> {
    if !mask.dims().same_shape(&reference.dims()) {
        return Err(Error::shape(op, "evaluation mask does not match the grids"));
    }
    match mask.popcount() {
        0 => Err(Error::validation(format!("{op}: empty evaluation mask"))),
        n => Ok(n),
    }
}

/// Mean squared error over the cells of `eval_mask`.
pub fn mse(reference: &ExposureGrid, predicted: &ExposureGrid, eval_mask: &ObservationMask) -> Result<f64> {
    check_pair("mse", reference, predicted)?;
    let n = eval_count("mse", reference, eval_mask)?;
    let mut sum = 0.0;
    for ((&y, &p), &m) in reference.values().iter().zip(predicted.values()).zip(eval_mask.bits()) {
        if m {
            let d = y - p;
            sum += d * d;
        }
    }
    Ok(sum / n as f64)
}

/// Mean absolute error over the cells of `eval_mask`.
pub fn mae(reference: &ExposureGrid, predicted: &ExposureGrid, eval_mask: &ObservationMask) -> Result<f64> {
    check_pair("mae", reference, predicted)?;
    let n = eval_count("mae", reference, eval_mask)?;
    let mut sum = 0.0;
    for ((&y, &p), &m) in reference.values().iter().zip(predicted.values()).zip(eval_mask.bits()) {
        if m {
            sum += (y - p).abs();
        }
    }
    Ok(sum / n as f64)
}

pub fn error_map(reference: &ExposureGrid, predicted: &ExposureGrid) -> Result<ExposureGrid> {
    check_pair("error_map", reference, predicted)?;
    let vals = reference
        .values()
        .iter()
        .zip(predicted.values())
        .map(|(a, b)| (a - b).abs())
        .collect();
    ExposureGrid::new(reference.dims(), vals)
}

/// Held-out evaluation cells: everything except sensor cells and building
/// cells, each exclusion switchable.
pub fn held_out_mask(
    sensors: &SensorSet,
    buildings: &BuildingMap,
    exclude_sensors: bool,
    exclude_buildings: bool,
) -> ObservationMask {
    let mut m = ObservationMask::full(sensors.dims());
    if exclude_sensors {
        m = m.minus(&sensors.mask());
    }
    if exclude_buildings {
        m = m.minus(buildings);
    }
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub mse: f64,
    pub mae: f64,
    pub n_evaluated: usize,
    pub error_map: ExposureGrid,
}

impl ErrorReport {
    pub fn compute(
        reference: &ExposureGrid,
        predicted: &ExposureGrid,
        eval_mask: &ObservationMask,
    ) -> Result<Self> {
        Ok(Self {
            mse: mse(reference, predicted, eval_mask)?,
            mae: mae(reference, predicted, eval_mask)?,
            n_evaluated: eval_mask.popcount(),
            error_map: error_map(reference, predicted)?,
        })
    }
}

fn sq_dist(r0: usize, c0: usize, r1: usize, c1: usize) -> f64 {
    let dr = r0 as f64 - r1 as f64;
    let dc = c0 as f64 - c1 as f64;
    dr * dr + dc * dc
}

/// Inverse distance weighting with weights `d^-power` (distance in cells).
/// Sensor cells keep their exact reading.
pub fn idw_interpolate(sensors: &SensorSet, dims: GridDims, power: f64) -> Result<ExposureGrid> {
    if sensors.is_empty() {
        return Err(Error::validation("idw needs at least one sensor"));
    }
    if !sensors.dims().same_shape(&dims) {
        return Err(Error::shape("idw_interpolate", "sensor grid differs from target grid"));
    }
    let mut exact = vec![None; dims.len()];
    for s in sensors.readings() {
        exact[dims.index(s.row, s.col)] = Some(s.value_vm);
    }
    let half_power = power / 2.0;
    ExposureGrid::from_fn(dims, |r, c| {
        if let Some(v) = exact[dims.index(r, c)] {
            return v;
        }
        let (mut num, mut den) = (0.0, 0.0);
        for s in sensors.readings() {
            let w = sq_dist(r, c, s.row, s.col).powf(-half_power);
            num += w * s.value_vm;
            den += w;
        }
        num / den
    })
}

/// Value of the nearest sensor; ties go to the lexicographically smallest
/// (row, col).
pub fn nearest_interpolate(sensors: &SensorSet, dims: GridDims) -> Result<ExposureGrid> {
    if sensors.is_empty() {
        return Err(Error::validation("nearest interpolation needs at least one sensor"));
    }
    if !sensors.dims().same_shape(&dims) {
        return Err(Error::shape("nearest_interpolate", "sensor grid differs from target grid"));
    }
    let mut ordered = sensors.readings().to_vec();
    ordered.sort_by_key(|s| (s.row, s.col));
    ExposureGrid::from_fn(dims, |r, c| {
        let mut best = &ordered[0];
        let mut best_d = sq_dist(r, c, best.row, best.col);
        for s in &ordered[1..] {
            let d = sq_dist(r, c, s.row, s.col);
            if d < best_d {
                best = s;
                best_d = d;
            }
        }
        best.value_vm
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SensorReading;
    use proptest::prelude::*;

    fn d8() -> GridDims {
        GridDims::new(8, 8, 1.0).unwrap()
    }

    fn grid(v: Vec<f64>) -> ExposureGrid {
        ExposureGrid::new(d8(), v).unwrap()
    }

    fn first_cells(n: usize) -> ObservationMask {
        let mut bits = vec![false; 64];
        bits[..n].iter_mut().for_each(|b| *b = true);
        ObservationMask::from_bits(d8(), bits).unwrap()
    }

    fn reading(row: usize, col: usize, value_vm: f64) -> SensorReading {
        SensorReading { row, col, value_vm }
    }

    #[test]
    fn metric_examples() {
        let z = grid(vec![0.0; 64]);
        let m2 = first_cells(2);
        assert_eq!(mse(&z, &z, &m2).unwrap(), 0.0);
        assert_eq!(mae(&z, &z, &m2).unwrap(), 0.0);

        let mut p = vec![0.0; 64];
        p[0] = 1.0;
        p[1] = 1.0;
        assert_eq!(mse(&z, &grid(p.clone()), &m2).unwrap(), 1.0);
        p[1] = 3.0;
        assert_eq!(mae(&z, &grid(p), &m2).unwrap(), 2.0);

        let mut p = vec![0.0; 64];
        p[0] = 0.5;
        assert_eq!(mse(&z, &grid(p), &first_cells(1)).unwrap(), 0.25);

        let c = grid(vec![0.3; 64]);
        let full = ObservationMask::full(d8());
        assert!((mae(&z, &c, &full).unwrap() - 0.3).abs() < 1e-15);

        let err = mse(&z, &z, &ObservationMask::empty(d8())).unwrap_err();
        assert!(err.to_string().contains("empty evaluation mask"));
    }

    #[test]
    fn error_map_cases() {
        let a = grid((0..64).map(|i| i as f64).collect());
        assert!(error_map(&a, &a).unwrap().values().iter().all(|&v| v == 0.0));
        let mut bv = a.values().to_vec();
        bv[10] += 2.5;
        let b = grid(bv);
        let e = error_map(&a, &b).unwrap();
        assert_eq!(e.values().iter().filter(|&&v| v != 0.0).count(), 1);
        assert_eq!(e, error_map(&b, &a).unwrap());
    }

    #[test]
    fn held_out_excludes_sensors_and_buildings() {
        let s = SensorSet::new(d8(), vec![reading(0, 0, 1.0), reading(1, 1, 1.0)]).unwrap();
        let mut b = BuildingMap::empty(d8());
        b.set(7, 7, true);
        assert_eq!(held_out_mask(&s, &b, true, true).popcount(), 61);
        assert_eq!(held_out_mask(&s, &b, false, true).popcount(), 63);
        assert_eq!(held_out_mask(&s, &b, false, false).popcount(), 64);
    }

    #[test]
    fn baseline_single_sensor_is_constant() {
        let s = SensorSet::new(d8(), vec![reading(3, 4, 0.7)]).unwrap();
        for g in [
            idw_interpolate(&s, d8(), 2.0).unwrap(),
            nearest_interpolate(&s, d8()).unwrap(),
        ] {
            assert!(g.values().iter().all(|&v| (v - 0.7).abs() < 1e-15));
        }
        let empty = SensorSet::new(d8(), vec![]).unwrap();
        assert!(idw_interpolate(&empty, d8(), 2.0).is_err());
        assert!(nearest_interpolate(&empty, d8()).is_err());
    }

    #[test]
    fn idw_equidistant_midpoint() {
        let s = SensorSet::new(d8(), vec![reading(2, 1, 0.0), reading(2, 5, 1.0)]).unwrap();
        let g = idw_interpolate(&s, d8(), 2.0).unwrap();
        assert!((g.get(2, 3) - 0.5).abs() < 1e-15);
        assert!((g.get(6, 3) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn nearest_tie_breaks_lexicographically() {
        let s = SensorSet::new(d8(), vec![reading(2, 5, 1.0), reading(2, 1, 0.2)]).unwrap();
        let g = nearest_interpolate(&s, d8()).unwrap();
        assert_eq!(g.get(2, 3), 0.2);
        assert_eq!(g.get(2, 4), 1.0);
    }

    proptest! {
        #[test]
        fn mae_bounded_by_rmse(
            a in prop::collection::vec(0.0f64..5.0, 64),
            b in prop::collection::vec(0.0f64..5.0, 64),
            n in 1usize..64,
        ) {
            let (a, b) = (grid(a), grid(b));
            let m = first_cells(n);
            let (e2, e1) = (mse(&a, &b, &m).unwrap(), mae(&a, &b, &m).unwrap());
            prop_assert!(e1 * e1 <= e2 * (1.0 + 1e-12) + 1e-300);
            prop_assert_eq!(e2 == 0.0, e1 == 0.0);
        }

        #[test]
        fn baselines_reproduce_sensor_values(
            cells in prop::collection::hash_set((0usize..8, 0usize..8), 1..20),
        ) {
            let readings: Vec<_> = cells.iter().enumerate()
                .map(|(i, &(r, c))| reading(r, c, 0.1 * i as f64)).collect();
            let s = SensorSet::new(d8(), readings).unwrap();
            let idw = idw_interpolate(&s, d8(), 2.0).unwrap();
            let nn = nearest_interpolate(&s, d8()).unwrap();
            for r in s.readings() {
                prop_assert_eq!(idw.get(r.row, r.col), r.value_vm);
                prop_assert_eq!(nn.get(r.row, r.col), r.value_vm);
            }
            let values: Vec<f64> = s.readings().iter().map(|r| r.value_vm).collect();
            prop_assert!(nn.values().iter().all(|v| values.contains(v)));
        }
    }
}
