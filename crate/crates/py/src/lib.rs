//! Python bindings: codec, spherical harmonics, schedules, splat clouds,
//! rendering, training and sweeps.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use splatlab_core::codec::{self, QuantizationSpec};
use splatlab_core::experiment::{self, ExperimentPlan, SceneSpec};
use splatlab_core::image::ImageBuffer;
use splatlab_core::model::{self, ColorMode};
use splatlab_core::render::{self, View};
use splatlab_core::schedules::ScheduleSpec;
use splatlab_core::sphharm;
use splatlab_core::train::{self, PerturbSpec, TrainConfig};

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyfunction]
fn encode_u(n: u64) -> String {
    codec::encode_u(n)
}

#[pyfunction]
fn decode_u(blob: &str) -> PyResult<u64> {
    codec::decode_u(blob).map_err(value_err)
}

#[pyfunction]
fn encode_f(value: f64, places: u32) -> PyResult<String> {
    codec::encode_f(value, places).map_err(value_err)
}

#[pyfunction]
fn decode_f(blob: &str) -> PyResult<f64> {
    codec::decode_f(blob).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (value, places=1, lo=0.0, hi=2.0))]
fn quantize(value: f64, places: u32, lo: f64, hi: f64) -> PyResult<f64> {
    let spec = QuantizationSpec::new(places, lo, hi).map_err(value_err)?;
    Ok(codec::quantize(value, &spec))
}

/// Encodes a list of equal-length rows.
#[pyfunction]
#[pyo3(signature = (rows, places=1, lo=0.0, hi=2.0))]
fn encode_matrix(rows: Vec<Vec<f64>>, places: u32, lo: f64, hi: f64) -> PyResult<String> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("rows differ in length"));
    }
    let spec = QuantizationSpec::new(places, lo, hi).map_err(value_err)?;
    let n = rows.len();
    codec::encode_matrix(&rows.concat(), n, cols, &spec).map_err(value_err)
}

#[pyfunction]
fn decode_matrix(blob: &str) -> PyResult<Vec<Vec<f64>>> {
    let m = codec::decode_matrix(blob).map_err(value_err)?;
    Ok((0..m.rows).map(|r| m.values[r * m.cols..(r + 1) * m.cols].to_vec()).collect())
}

#[pyfunction]
fn sh_basis(degree: usize, theta: f64, phi: f64) -> PyResult<Vec<f64>> {
    sphharm::sh_basis(degree, theta, phi).map_err(value_err)
}

/// Rate of a schedule such as `rw0-2-4` or `exp:1e-3,1e-6` at iteration `t` of `total`.
#[pyfunction]
#[pyo3(signature = (spec, t, total, base_rate=1.6e-4))]
fn schedule_rate(spec: &str, t: u64, total: u64, base_rate: f64) -> PyResult<f64> {
    ScheduleSpec::parse(spec, base_rate)
        .and_then(|s| s.eval(t, total))
        .map_err(value_err)
}

#[pyclass(frozen)]
struct Image {
    inner: ImageBuffer,
}

#[pymethods]
impl Image {
    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        self.inner.shape()
    }

    /// Row-major, channel-interleaved values in [0, 1].
    #[getter]
    fn data(&self) -> Vec<f64> {
        self.inner.data.clone()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(value_err)
    }
}

#[pyclass(frozen)]
struct SplatCloud {
    inner: model::SplatCloud,
}

#[pymethods]
impl SplatCloud {
    #[staticmethod]
    #[pyo3(signature = (n, seed=0, extent=1.0, sh_degree=3))]
    fn synthetic(n: usize, seed: u64, extent: f64, sh_degree: usize) -> PyResult<Self> {
        let inner = model::SplatCloud::init_synthetic(n, seed, extent, sh_degree).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = model::SplatCloud::load_checkpoint(&path).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_checkpoint(text: &str) -> PyResult<Self> {
        let inner = model::SplatCloud::from_checkpoint(text).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[pyo3(signature = (sh_places=1))]
    fn to_checkpoint(&self, sh_places: u32) -> PyResult<String> {
        self.inner.to_checkpoint(sh_places).map_err(value_err)
    }

    #[pyo3(signature = (path, sh_places=1))]
    fn save(&self, path: PathBuf, sh_places: u32) -> PyResult<usize> {
        self.inner.save_checkpoint(&path, sh_places).map_err(value_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn color_mode(&self) -> String {
        self.inner.color_mode.name()
    }

    #[getter]
    fn sh_degree(&self) -> Option<usize> {
        self.inner.sh_degree()
    }

    #[getter]
    fn positions(&self) -> Vec<[f64; 3]> {
        self.inner.points.iter().map(|p| p.position).collect()
    }

    fn decimate(&self, gap: usize) -> PyResult<Self> {
        let inner = self.inner.decimate(gap).map_err(value_err)?;
        Ok(Self { inner })
    }

    fn strip_color(&self) -> Self {
        Self {
            inner: self.inner.strip_color(),
        }
    }

    #[pyo3(signature = (theta, phi, size=64, pixel_size=None, degree=None))]
    fn render(&self, theta: f64, phi: f64, size: usize, pixel_size: Option<f64>, degree: Option<usize>) -> PyResult<Image> {
        let view = View::new(theta, phi, size, size, pixel_size.unwrap_or(3.6 / size as f64)).map_err(value_err)?;
        let degree = degree.unwrap_or(self.inner.sh_degree().unwrap_or(0));
        let inner = render::render(&self.inner, &view, degree).map_err(value_err)?;
        Ok(Image { inner })
    }

    fn __repr__(&self) -> String {
        format!("SplatCloud(points={}, color_mode={})", self.inner.len(), self.inner.color_mode.name())
    }
}

/// Synthetic ground truth with its camera views and target renders.
#[pyclass(frozen)]
struct Scene {
    inner: experiment::Scene,
}

#[pymethods]
impl Scene {
    #[new]
    #[pyo3(signature = (points=200, seed=1, views=8, test_views=1, image_size=64, sh_degree=3))]
    fn new(points: usize, seed: u64, views: usize, test_views: usize, image_size: usize, sh_degree: usize) -> PyResult<Self> {
        let spec = SceneSpec {
            points,
            seed,
            views,
            test_views,
            image_size,
            sh_degree,
            ..SceneSpec::default()
        };
        let inner = experiment::gen_scene(&spec).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn truth(&self) -> SplatCloud {
        SplatCloud {
            inner: self.inner.truth.clone(),
        }
    }

    fn targets(&self) -> Vec<Image> {
        self.inner.targets.iter().map(|t| Image { inner: t.clone() }).collect()
    }

    fn write(&self, dir: PathBuf) -> PyResult<()> {
        experiment::write_scene(&self.inner, &dir).map_err(value_err)
    }

    /// Perturbs the ground truth, trains it back and returns the fitted cloud
    /// with its metrics.
    #[allow(clippy::too_many_arguments)]
    #[pyo3(signature = (iterations=500, max_degree=3, color_mode="full", gap=1, seed=0, perturb_seed=0))]
    fn train<'py>(
        &self,
        py: Python<'py>,
        iterations: u64,
        max_degree: usize,
        color_mode: &str,
        gap: usize,
        seed: u64,
        perturb_seed: u64,
    ) -> PyResult<(SplatCloud, Bound<'py, PyDict>)> {
        let cfg = TrainConfig {
            iterations,
            max_degree,
            color_mode: ColorMode::parse(color_mode)
                .ok_or_else(|| PyValueError::new_err(format!("unknown color mode {color_mode:?}")))?,
            gap,
            seed,
            ..TrainConfig::default()
        };
        let init = train::perturb(&self.inner.truth, &PerturbSpec::default(), perturb_seed).map_err(value_err)?;
        let data = self.inner.dataset();
        let (cloud, m) = py
            .detach(|| train::train(&init, &data, &cfg))
            .map_err(value_err)?;
        let d = PyDict::new(py);
        for (k, v) in [("l1", m.l1), ("l2", m.l2), ("p1", m.p1), ("p2", m.p2), ("pt", m.pt), ("pc", m.pc)] {
            d.set_item(k, v)?;
        }
        d.set_item("st", m.st)?;
        d.set_item("points", m.points)?;
        d.set_item("loss_curve", m.loss_curve)?;
        d.set_item("sh_mults", m.work.sh_mults)?;
        Ok((SplatCloud { inner: cloud }, d))
    }
}

/// Runs a TOML experiment plan into `out_dir` and returns the report CSV text.
#[pyfunction]
fn run_plan(py: Python<'_>, plan_toml: &str, out_dir: PathBuf) -> PyResult<String> {
    let plan = ExperimentPlan::from_toml(plan_toml).map_err(value_err)?;
    let table = py
        .detach(|| experiment::run_plan(&plan, &out_dir))
        .map_err(value_err)?;
    Ok(table.to_csv())
}

#[pymodule]
fn splatlab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(encode_u, m)?)?;
    m.add_function(wrap_pyfunction!(decode_u, m)?)?;
    m.add_function(wrap_pyfunction!(encode_f, m)?)?;
    m.add_function(wrap_pyfunction!(decode_f, m)?)?;
    m.add_function(wrap_pyfunction!(quantize, m)?)?;
    m.add_function(wrap_pyfunction!(encode_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(decode_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(sh_basis, m)?)?;
    m.add_function(wrap_pyfunction!(schedule_rate, m)?)?;
    m.add_function(wrap_pyfunction!(run_plan, m)?)?;
    m.add_class::<Image>()?;
    m.add_class::<SplatCloud>()?;
    m.add_class::<Scene>()?;
    Ok(())
}
