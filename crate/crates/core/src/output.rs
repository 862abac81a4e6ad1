//! Result serialization: legacy VTK snapshots and CSV diagnostics.
//!
//! Output is deterministic byte-for-byte for a fixed state: every float is
//! written with the same fixed-precision scientific format. Pressures are
//! written in mmHg; concentrations stay in µg·mm⁻³.

use std::fmt::Write as FmtWrite;
use std::io::Write;
use std::path::Path;

use crate::assembly::QuadratureValues;
use crate::error::Result;
use crate::model::MMHG_TO_PA;
use crate::space::{DgSpace, FieldVector};
use crate::stepper::{DiagRow, HealthyBaseline, SimulationState};

fn fmt(v: f64) -> String {
    format!("{v:.9e}")
}

/// Elementwise means of per-quadrature-point values (reference weights sum
/// to 1/2, so the mean is twice the weighted sum).
fn quad_means(space: &DgSpace, values: &QuadratureValues) -> Vec<f64> {
    let weights = &space.volume_rule.weights;
    (0..space.mesh.num_elements())
        .map(|k| {
            2.0 * values
                .elem(k)
                .iter()
                .zip(weights)
                .map(|(v, w)| v * w)
                .sum::<f64>()
        })
        .collect()
}

/// Grid preamble with per-element duplicated corner points, so discontinuous
/// point data renders faithfully.
fn vtk_grid(space: &DgSpace, title: &str) -> String {
    let mesh = &space.mesh;
    let m = mesh.num_elements();
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(s, "{title}");
    s.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {} double", 3 * m);
    for k in 0..m {
        for v in mesh.element_vertices(k) {
            let _ = writeln!(s, "{} {} {}", fmt(v[0]), fmt(v[1]), fmt(0.0));
        }
    }
    let _ = writeln!(s, "CELLS {} {}", m, 4 * m);
    for k in 0..m {
        let _ = writeln!(s, "3 {} {} {}", 3 * k, 3 * k + 1, 3 * k + 2);
    }
    let _ = writeln!(s, "CELL_TYPES {m}");
    for _ in 0..m {
        s.push_str("5\n");
    }
    s
}

fn cell_scalars(s: &mut String, name: &str, values: &[f64]) {
    let _ = writeln!(s, "SCALARS {name} double 1");
    s.push_str("LOOKUP_TABLE default\n");
    for v in values {
        let _ = writeln!(s, "{}", fmt(*v));
    }
}

fn point_scalars(s: &mut String, name: &str, field: &FieldVector, scale: f64) {
    let _ = writeln!(s, "SCALARS {name} double 1");
    s.push_str("LOOKUP_TABLE default\n");
    for k in 0..field.space.mesh.num_elements() {
        for v in field.corner_values(k) {
            let _ = writeln!(s, "{}", fmt(v * scale));
        }
    }
}

/// Renders a simulation state as a legacy VTK unstructured grid.
pub fn vtk_snapshot_string(state: &SimulationState) -> String {
    let space = &state.u.space;
    let mut s = vtk_grid(space, &format!("state at t = {} yr", state.time));
    let m = space.mesh.num_elements();
    let to_mmhg = 1.0 / MMHG_TO_PA;

    let _ = writeln!(s, "CELL_DATA {m}");
    cell_scalars(&mut s, "u", &state.u.elementwise_means());
    cell_scalars(&mut s, "u_tilde", &state.util.elementwise_means());
    for (name, field) in [
        ("p_A", &state.p_a),
        ("p_C", &state.p_c),
        ("p_V", &state.p_v),
    ] {
        let means: Vec<f64> = field
            .elementwise_means()
            .iter()
            .map(|v| v * to_mmhg)
            .collect();
        cell_scalars(&mut s, name, &means);
    }
    cell_scalars(
        &mut s,
        "CBF_reduction",
        &quad_means(space, &state.cbf_reduction),
    );

    let _ = writeln!(s, "POINT_DATA {}", 3 * m);
    point_scalars(&mut s, "u", &state.u, 1.0);
    point_scalars(&mut s, "u_tilde", &state.util, 1.0);
    point_scalars(&mut s, "p_A", &state.p_a, to_mmhg);
    point_scalars(&mut s, "p_C", &state.p_c, to_mmhg);
    point_scalars(&mut s, "p_V", &state.p_v, to_mmhg);
    s
}

pub fn write_vtk_snapshot(state: &SimulationState, path: &Path) -> Result<()> {
    std::fs::write(path, vtk_snapshot_string(state))?;
    Ok(())
}

/// Renders the healthy baseline (pressures and Q_H).
pub fn vtk_baseline_string(baseline: &HealthyBaseline) -> String {
    let space = &baseline.p_a.space;
    let mut s = vtk_grid(space, "healthy perfusion baseline");
    let m = space.mesh.num_elements();
    let to_mmhg = 1.0 / MMHG_TO_PA;
    let _ = writeln!(s, "CELL_DATA {m}");
    for (name, field) in [
        ("p_A", &baseline.p_a),
        ("p_C", &baseline.p_c),
        ("p_V", &baseline.p_v),
    ] {
        let means: Vec<f64> = field
            .elementwise_means()
            .iter()
            .map(|v| v * to_mmhg)
            .collect();
        cell_scalars(&mut s, name, &means);
    }
    // Q_H lives on the protein-space rule; its element count matches.
    let q_h_space = &baseline.p_a.space;
    let per_elem: Vec<f64> = if baseline.q_h.nq == q_h_space.volume_rule.len() {
        quad_means(q_h_space, &baseline.q_h)
    } else {
        (0..m)
            .map(|k| {
                let vals = baseline.q_h.elem(k);
                vals.iter().sum::<f64>() / vals.len() as f64
            })
            .collect()
    };
    cell_scalars(&mut s, "Q_H", &per_elem);
    let _ = writeln!(s, "POINT_DATA {}", 3 * m);
    point_scalars(&mut s, "p_A", &baseline.p_a, to_mmhg);
    point_scalars(&mut s, "p_C", &baseline.p_c, to_mmhg);
    point_scalars(&mut s, "p_V", &baseline.p_v, to_mmhg);
    s
}

pub fn write_vtk_baseline(baseline: &HealthyBaseline, path: &Path) -> Result<()> {
    std::fs::write(path, vtk_baseline_string(baseline))?;
    Ok(())
}

/// RFC-4180-style field quoting: only fields containing separators, quotes
/// or line breaks are quoted.
fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub const CSV_HEADER: &str =
    "step,time_yr,mass_u,mass_util,max_util,min_u,max_cbf_reduction,classification";

pub fn csv_row(row: &DiagRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        row.step,
        fmt(row.time),
        fmt(row.mass_u),
        fmt(row.mass_util),
        fmt(row.max_util),
        fmt(row.min_u),
        fmt(row.max_cbf_reduction),
        csv_field(&row.classification_so_far.to_string()),
    )
}

/// Streaming CSV writer used by the run loop.
pub struct CsvLog<W: Write> {
    out: W,
}

impl<W: Write> CsvLog<W> {
    pub fn new(mut out: W) -> Result<CsvLog<W>> {
        writeln!(out, "{CSV_HEADER}")?;
        Ok(CsvLog { out })
    }

    pub fn write_row(&mut self, row: &DiagRow) -> Result<()> {
        writeln!(self.out, "{}", csv_row(row))?;
        Ok(())
    }
}

/// Writes a complete run's diagnostics in one shot.
pub fn write_timeseries_csv(rows: &[DiagRow], mut out: impl Write) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(out, "{}", csv_row(row))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_rect_mesh;
    use crate::model::PhysicalParams;
    use crate::stepper::{
        run_simulation, Classification, FiberField, InitialData, Problem, RunSettings,
    };
    use crate::linsolve::SolverKind;
    use std::sync::Arc;

    fn tiny_state() -> SimulationState {
        let mesh = Arc::new(generate_rect_mesh(2, 2, 0.1, 0.4).unwrap());
        let problem = Problem::new(
            mesh,
            1,
            1,
            PhysicalParams::default(),
            vec![],
            10.0,
            SolverKind::Direct,
            FiberField::None,
        )
        .unwrap();
        let initial = InitialData {
            u0: 1.0,
            util0: 0.0,
            seeds: vec![],
        };
        let settings = RunSettings {
            t_end: 0.1,
            dt: 0.1,
            snapshot_cadence: 1.0,
        };
        let mut captured = None;
        run_simulation(
            &problem,
            &initial,
            &settings,
            |state, idx| {
                if idx == 0 {
                    captured = Some(SimulationState {
                        time: state.time,
                        u: state.u.clone(),
                        util: state.util.clone(),
                        p_a: state.p_a.clone(),
                        p_c: state.p_c.clone(),
                        p_v: state.p_v.clone(),
                        cbf_reduction: state.cbf_reduction.clone(),
                        diagnostics: state.diagnostics,
                    });
                }
                Ok(())
            },
            |_| Ok(()),
        )
        .unwrap();
        captured.unwrap()
    }

    #[test]
    fn vtk_header_and_constant_cell_data() {
        let state = tiny_state();
        let s = vtk_snapshot_string(&state);
        assert!(s.starts_with("# vtk DataFile Version 3.0\n"));
        assert!(s.contains("DATASET UNSTRUCTURED_GRID"));
        assert!(s.contains("SCALARS u double 1"));
        assert!(s.contains("SCALARS CBF_reduction double 1"));
        // u ≡ 1 everywhere: its cell data block is eight identical lines.
        let u_block: Vec<&str> = s
            .split("SCALARS u double 1\nLOOKUP_TABLE default\n")
            .nth(1)
            .unwrap()
            .lines()
            .take(8)
            .collect();
        for line in u_block {
            assert_eq!(line, fmt(1.0));
        }
    }

    #[test]
    fn vtk_output_deterministic() {
        let state = tiny_state();
        assert_eq!(vtk_snapshot_string(&state), vtk_snapshot_string(&state));
    }

    #[test]
    fn csv_shapes() {
        let mut buf = Vec::new();
        write_timeseries_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{CSV_HEADER}\n"));

        let row = DiagRow {
            step: 3,
            time: 0.3,
            mass_u: 0.04,
            mass_util: 0.0,
            max_util: 0.0,
            min_u: 1.0,
            max_cbf_reduction: 0.0,
            classification_so_far: Classification::Indeterminate,
        };
        let line = csv_row(&row);
        assert!(line.starts_with("3,"));
        assert!(line.ends_with("INDETERMINATE"));
        assert_eq!(line.split(',').count(), 8);
    }

    #[test]
    fn csv_quoting() {
        assert_eq!(csv_field("plain"), "plain");
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
    }
}
