//! File formats: demonstration / dataset / trace / episode CSVs and the
//! JSON model bundle. Float fields use the shortest round-trip form, so a
//! rerun with the same seed reproduces every file byte for byte.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dmp::{DmpParams, Trajectory};
use crate::gac::TraceRow;
use crate::gp::{GprModel, InputNormalizer, KernelParams, INPUT_DIM};
use crate::pipeline::{DatasetRow, EpisodeRecord, TrainedModels};
use crate::types::{Vec3, Wrench};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("model bundle: {0}")]
    Bundle(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> IoError {
    IoError::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

pub const DEMO_HEADER: &str = "t_s,x_mm,y_mm,z_mm";
pub const DATASET_HEADER: &str = "trial_id,dx_mm,dy_mm,fx_N,fy_N,fz_N,mx_Nmm,my_Nmm,mz_Nmm,converged";
pub const TRACE_HEADER: &str = "k,t_s,xr_z_mm,xc_z_mm,x_z_mm,fx,fy,fz,mx,my,mz";
pub const EPISODE_HEADER: &str =
    "episode_id,dx_mm,dy_mm,attempts,outcome,corr_x_mm,corr_y_mm";

pub fn write_demo_csv(path: &Path, demo: &Trajectory) -> Result<(), IoError> {
    let mut out = String::with_capacity(demo.len() * 32);
    out.push_str(DEMO_HEADER);
    out.push('\n');
    for (t, p) in demo.timestamps().zip(demo.positions()) {
        writeln!(out, "{t},{},{},{}", p.x, p.y, p.z).expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_demo_csv(path: &Path) -> Result<Trajectory, IoError> {
    let text = std::fs::read_to_string(path)?;
    let mut timestamps = Vec::new();
    let mut positions = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 {
            if line.trim() != DEMO_HEADER {
                return Err(parse_err(path, 1, format!("expected header `{DEMO_HEADER}`")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(parse_err(path, idx + 1, "expected 4 fields"));
        }
        let mut vals = [0.0; 4];
        for (v, f) in vals.iter_mut().zip(&fields) {
            *v = f
                .trim()
                .parse::<f64>()
                .map_err(|e| parse_err(path, idx + 1, e.to_string()))?;
        }
        timestamps.push(vals[0]);
        positions.push(Vec3::new(vals[1], vals[2], vals[3]));
    }
    Trajectory::from_timestamps(&timestamps, positions)
        .map_err(|e| parse_err(path, 0, e.to_string()))
}

pub fn write_dataset_csv(path: &Path, rows: &[DatasetRow]) -> Result<(), IoError> {
    let mut out = String::with_capacity(rows.len() * 96);
    out.push_str(DATASET_HEADER);
    out.push('\n');
    for r in rows {
        let w = r.wrench;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.trial_id,
            r.misalignment.x,
            r.misalignment.y,
            w.fx,
            w.fy,
            w.fz,
            w.mx,
            w.my,
            w.mz,
            if r.converged { 1 } else { 0 }
        )
        .expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_dataset_csv(path: &Path) -> Result<Vec<DatasetRow>, IoError> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 {
            if line.trim() != DATASET_HEADER {
                return Err(parse_err(
                    path,
                    1,
                    format!("expected header `{DATASET_HEADER}`"),
                ));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(parse_err(path, idx + 1, "expected 10 fields"));
        }
        let trial_id: usize = fields[0]
            .trim()
            .parse()
            .map_err(|e: std::num::ParseIntError| parse_err(path, idx + 1, e.to_string()))?;
        let mut vals = [0.0; 8];
        for (v, f) in vals.iter_mut().zip(&fields[1..9]) {
            *v = f
                .trim()
                .parse::<f64>()
                .map_err(|e| parse_err(path, idx + 1, e.to_string()))?;
        }
        let converged = match fields[9].trim() {
            "1" => true,
            "0" => false,
            other => {
                return Err(parse_err(
                    path,
                    idx + 1,
                    format!("converged must be 0 or 1, got `{other}`"),
                ))
            }
        };
        rows.push(DatasetRow {
            trial_id,
            misalignment: Vector2::new(vals[0], vals[1]),
            wrench: Wrench::new(vals[2], vals[3], vals[4], vals[5], vals[6], vals[7]),
            converged,
        });
    }
    Ok(rows)
}

pub fn write_trace_csv(path: &Path, trace: &[TraceRow]) -> Result<(), IoError> {
    let mut out = String::with_capacity(trace.len() * 96);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in trace {
        let w = r.wrench;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.step,
            r.time_s,
            r.reference_z,
            r.commanded_z,
            r.actual_z,
            w.fx,
            w.fy,
            w.fz,
            w.mx,
            w.my,
            w.mz
        )
        .expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_episodes_csv(path: &Path, episodes: &[EpisodeRecord]) -> Result<(), IoError> {
    let mut out = String::with_capacity(episodes.len() * 64);
    out.push_str(EPISODE_HEADER);
    out.push('\n');
    for (i, e) in episodes.iter().enumerate() {
        let total = e.total_correction();
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            i,
            e.injected_error.x,
            e.injected_error.y,
            e.attempts,
            e.outcome,
            total.x,
            total.y
        )
        .expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Serialized form of one fitted GP: training data plus hyperparameters;
/// posterior factors are recomputed on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GprDto {
    pub normalizer: InputNormalizer,
    pub kernel: KernelParams,
    pub inputs: Vec<[f64; INPUT_DIM]>,
    pub targets: Vec<f64>,
}

impl GprDto {
    fn of(model: &GprModel) -> Self {
        Self {
            normalizer: model.normalizer().clone(),
            kernel: model.kernel().clone(),
            inputs: model.training_inputs().to_vec(),
            targets: model.training_targets().to_vec(),
        }
    }

    fn build(self) -> Result<GprModel, IoError> {
        GprModel::from_parts(self.inputs, self.targets, self.normalizer, self.kernel)
            .map_err(|e| IoError::Bundle(e.to_string()))
    }
}

/// On-disk model bundle: the movement primitive plus the four wrench
/// models.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelBundle {
    pub dmp: DmpParams,
    pub regressor_x: GprDto,
    pub regressor_y: GprDto,
    pub sign_x: GprDto,
    pub sign_y: GprDto,
}

pub fn save_models(path: &Path, models: &TrainedModels) -> Result<(), IoError> {
    let bundle = ModelBundle {
        dmp: models.dmp.clone(),
        regressor_x: GprDto::of(&models.regressor_x),
        regressor_y: GprDto::of(&models.regressor_y),
        sign_x: GprDto::of(&models.sign_x),
        sign_y: GprDto::of(&models.sign_y),
    };
    let json = serde_json::to_string_pretty(&bundle)?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_models(path: &Path) -> Result<TrainedModels, IoError> {
    let text = std::fs::read_to_string(path)?;
    let bundle: ModelBundle = serde_json::from_str(&text)?;
    Ok(TrainedModels {
        dmp: bundle.dmp,
        regressor_x: bundle.regressor_x.build()?,
        regressor_y: bundle.regressor_y.build()?,
        sign_x: bundle.sign_x.build()?,
        sign_y: bundle.sign_y.build()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dmp::min_jerk;
    use crate::pipeline::EpisodeOutcome;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("pih-core-io-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn demo_roundtrip() {
        let demo = min_jerk(Vec3::new(-30.0, -30.0, 40.0), Vec3::new(0.0, 0.0, -5.0), 50, 280.0);
        let path = tmp("demo.csv");
        write_demo_csv(&path, &demo).unwrap();
        let back = read_demo_csv(&path).unwrap();
        assert_eq!(back.len(), demo.len());
        assert!((back.end() - demo.end()).norm() < 1e-9);
    }

    #[test]
    fn corrupt_demo_reports_line() {
        let path = tmp("bad_demo.csv");
        std::fs::write(&path, format!("{DEMO_HEADER}\n0,0,0,40\nnot-a-number,0,0,39\n")).unwrap();
        let err = read_demo_csv(&path).unwrap_err();
        match err {
            IoError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn dataset_roundtrip() {
        let rows = vec![
            DatasetRow {
                trial_id: 0,
                misalignment: Vector2::new(0.5, -3.25),
                wrench: Wrench::new(0.01, -0.02, 5.0, -31.4, 0.2, 0.0),
                converged: true,
            },
            DatasetRow {
                trial_id: 1,
                misalignment: Vector2::new(-7.0, 1.0),
                wrench: Wrench::ZERO,
                converged: false,
            },
        ];
        let path = tmp("dataset.csv");
        write_dataset_csv(&path, &rows).unwrap();
        let back = read_dataset_csv(&path).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn dataset_rejects_wrong_header() {
        let path = tmp("hdr.csv");
        std::fs::write(&path, "a,b\n").unwrap();
        assert!(matches!(
            read_dataset_csv(&path),
            Err(IoError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn episode_csv_written() {
        let path = tmp("episodes.csv");
        let eps = vec![EpisodeRecord {
            injected_error: Vector2::new(2.0, -3.0),
            attempts: 4,
            corrections: vec![Vector2::new(2.0, 2.0), Vector2::new(2.0, -2.0)],
            attempt_wrenches: vec![],
            outcome: EpisodeOutcome::Success,
        }];
        write_episodes_csv(&path, &eps).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(EPISODE_HEADER));
        assert!(text.contains("success"));
    }
}
