//! Python bindings. Volumes cross the boundary as flat lists in x-fastest
//! order together with a `(nx, ny, nz)` tuple.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use lesionscope::clinical::{self, CtClass, CtThresholds};
use lesionscope::evaluation;
use lesionscope::fusion::{self, FusionConfig};
use lesionscope::io::{self as lio, RawVolume};
use lesionscope::synth;
use lesionscope::{BinaryMask, CtVolume, Dims, ProbabilityVolume, Spacing, UnitState};

fn err(e: lesionscope::Error) -> PyErr {
    let msg = format!("[{}] {}", e.category(), e);
    match e.exit_code() {
        3 => PyOSError::new_err(msg),
        4 => PyRuntimeError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn dims_of(d: (usize, usize, usize)) -> Dims {
    Dims::new(d.0, d.1, d.2)
}

fn tuple(d: Dims) -> (usize, usize, usize) {
    (d.nx, d.ny, d.nz)
}

#[pyclass(name = "Mask", module = "lesionscope", skip_from_py_object)]
#[derive(Clone)]
pub struct PyMask {
    inner: BinaryMask,
    spacing: Spacing,
}

#[pymethods]
impl PyMask {
    #[new]
    #[pyo3(signature = (dims, bits, spacing = (1.0, 1.0, 1.0)))]
    fn new(dims: (usize, usize, usize), bits: Vec<bool>, spacing: (f64, f64, f64)) -> PyResult<Self> {
        Ok(Self {
            inner: BinaryMask::new(dims_of(dims), bits).map_err(err)?,
            spacing: Spacing::new(spacing.0, spacing.1, spacing.2),
        })
    }

    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        tuple(self.inner.dims())
    }

    #[getter]
    fn spacing(&self) -> (f64, f64, f64) {
        (self.spacing.sx, self.spacing.sy, self.spacing.sz)
    }

    fn bits(&self) -> Vec<bool> {
        self.inner.bits().to_vec()
    }

    fn count(&self) -> usize {
        self.inner.count()
    }

    fn save(&self, header: PathBuf) -> PyResult<()> {
        lio::write_raw_volume(&RawVolume::Mask(self.inner.clone(), self.spacing), &header).map_err(err)
    }

    fn __repr__(&self) -> String {
        let d = self.inner.dims();
        format!("Mask(dims=({}, {}, {}), count={})", d.nx, d.ny, d.nz, self.inner.count())
    }
}

#[pyclass(name = "Probability", module = "lesionscope", skip_from_py_object)]
#[derive(Clone)]
pub struct PyProbability {
    inner: ProbabilityVolume,
}

#[pymethods]
impl PyProbability {
    #[new]
    fn new(dims: (usize, usize, usize), probs: Vec<f32>) -> PyResult<Self> {
        Ok(Self {
            inner: ProbabilityVolume::new(dims_of(dims), probs).map_err(err)?,
        })
    }

    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        tuple(self.inner.dims())
    }

    fn probs(&self) -> Vec<f32> {
        self.inner.probs().to_vec()
    }

    /// Voxels strictly above `thr`.
    fn threshold(&self, thr: f32) -> PyMask {
        PyMask {
            inner: self.inner.threshold(thr),
            spacing: Spacing::default(),
        }
    }
}

#[pyclass(name = "CtVolume", module = "lesionscope", skip_from_py_object)]
#[derive(Clone)]
pub struct PyCtVolume {
    inner: CtVolume,
}

#[pymethods]
impl PyCtVolume {
    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        tuple(self.inner.dims())
    }

    #[getter]
    fn spacing(&self) -> (f64, f64, f64) {
        let s = self.inner.spacing();
        (s.sx, s.sy, s.sz)
    }

    #[getter]
    fn unit(&self) -> &'static str {
        match self.inner.unit_state() {
            UnitState::RawStored => "raw",
            UnitState::Hounsfield => "hu",
            UnitState::Normalized => "normalized",
        }
    }

    fn voxels(&self) -> Vec<f64> {
        self.inner.voxels().to_vec()
    }

    fn to_hounsfield(&self) -> PyResult<Self> {
        Ok(Self {
            inner: lesionscope::preprocess::to_hounsfield(&self.inner).map_err(err)?,
        })
    }

    fn normalize_lung_window(&self) -> PyResult<Self> {
        Ok(Self {
            inner: lesionscope::preprocess::normalize_lung_window(&self.inner).map_err(err)?,
        })
    }

    fn save(&self, header: PathBuf) -> PyResult<()> {
        lio::write_raw_volume(&RawVolume::Ct(self.inner.clone()), &header).map_err(err)
    }
}

/// Reads a sidecar volume; returns a `CtVolume`, `Probability` or `Mask`.
#[pyfunction]
fn read_volume(py: Python<'_>, header: PathBuf) -> PyResult<Py<PyAny>> {
    Ok(match lio::read_raw_volume(&header).map_err(err)? {
        RawVolume::Ct(v) => Py::new(py, PyCtVolume { inner: v })?.into_any(),
        RawVolume::Prob(p, _) => Py::new(py, PyProbability { inner: p })?.into_any(),
        RawVolume::Mask(m, s) => Py::new(py, PyMask { inner: m, spacing: s })?.into_any(),
    })
}

#[pyfunction]
#[pyo3(signature = (directory, series_filter = Some("lung".to_string())))]
fn parse_dicom_series(directory: PathBuf, series_filter: Option<String>) -> PyResult<PyCtVolume> {
    let opts = lio::SeriesOptions { series_filter };
    Ok(PyCtVolume {
        inner: lio::parse_dicom_series_with(&directory, &opts).map_err(err)?,
    })
}

#[pyfunction]
fn dice(a: PyRef<'_, PyMask>, b: PyRef<'_, PyMask>) -> PyResult<f64> {
    evaluation::dice(&a.inner, &b.inner).map_err(err)
}

#[pyfunction]
fn iou(a: PyRef<'_, PyMask>, b: PyRef<'_, PyMask>) -> PyResult<f64> {
    evaluation::iou(&a.inner, &b.inner).map_err(err)
}

#[pyfunction]
fn panel_ground_truth(masks: Vec<PyRef<'_, PyMask>>, quorum: usize) -> PyResult<PyMask> {
    let refs: Vec<&BinaryMask> = masks.iter().map(|m| &m.inner).collect();
    let cfg = evaluation::PanelConfig {
        quorum,
        panel_size: refs.len(),
    };
    Ok(PyMask {
        inner: evaluation::panel_ground_truth(&refs, &cfg).map_err(err)?,
        spacing: masks.first().map(|m| m.spacing).unwrap_or_default(),
    })
}

#[pyfunction]
fn paired_permutation_test(x: Vec<f64>, y: Vec<f64>, resamples: usize, seed: u64) -> PyResult<f64> {
    evaluation::paired_permutation_test(&x, &y, resamples, seed).map_err(err)
}

fn probs<'a>(v: &'a [PyRef<'_, PyProbability>]) -> Vec<&'a ProbabilityVolume> {
    v.iter().map(|p| &p.inner).collect()
}

#[pyfunction]
fn mean_ensemble(models: Vec<PyRef<'_, PyProbability>>) -> PyResult<PyProbability> {
    Ok(PyProbability {
        inner: fusion::mean_ensemble(&probs(&models)).map_err(err)?,
    })
}

#[pyfunction]
fn unanimous_vote(models: Vec<PyRef<'_, PyProbability>>, thr: f64) -> PyResult<PyMask> {
    Ok(PyMask {
        inner: fusion::unanimous_vote(&probs(&models), thr).map_err(err)?,
        spacing: Spacing::default(),
    })
}

/// Score fusion with the default thresholds.
#[pyfunction]
fn score_fusion(
    resnet: Vec<PyRef<'_, PyProbability>>,
    dpn_mean: PyRef<'_, PyProbability>,
    fpn_mean: PyRef<'_, PyProbability>,
) -> PyResult<PyMask> {
    Ok(PyMask {
        inner: fusion::score_fusion(&probs(&resnet), &dpn_mean.inner, &fpn_mean.inner, &FusionConfig::default())
            .map_err(err)?,
        spacing: Spacing::default(),
    })
}

/// Returns a dict with per-lung and total shares and voxel counts.
#[pyfunction]
fn lesion_share(
    py: Python<'_>,
    lesion: PyRef<'_, PyMask>,
    left: PyRef<'_, PyMask>,
    right: PyRef<'_, PyMask>,
) -> PyResult<Py<PyAny>> {
    let r = clinical::lesion_share(&lesion.inner, &left.inner, &right.inner, lesion.spacing).map_err(err)?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("left_share", r.left_share)?;
    d.set_item("right_share", r.right_share)?;
    d.set_item("total_share", r.total_share)?;
    d.set_item("max_share", r.max_share)?;
    d.set_item("lesion_voxels", r.lesion_voxels)?;
    d.set_item("lung_voxels", r.lung_voxels)?;
    d.set_item("lesion_ml", r.lesion_ml)?;
    d.set_item("lung_ml", r.lung_ml)?;
    Ok(d.into_any().unbind())
}

/// CT class name (`"CT0"` .. `"CT4"`) for `share`.
#[pyfunction]
#[pyo3(signature = (share, thresholds = (0.25, 0.5, 0.75)))]
fn ct_class(share: f64, thresholds: (f64, f64, f64)) -> PyResult<String> {
    let t = CtThresholds::new(thresholds.0, thresholds.1, thresholds.2).map_err(err)?;
    Ok(clinical::ct_class(share, &t).to_string())
}

/// Returns `((t2, t3, t4), accuracy)`.
#[pyfunction]
fn fit_ct_thresholds(shares: Vec<f64>, labels: Vec<String>) -> PyResult<((f64, f64, f64), f64)> {
    let labels = labels
        .iter()
        .map(|l| l.parse::<CtClass>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    let fit = clinical::fit_ct_thresholds(&shares, &labels).map_err(err)?;
    let t = fit.thresholds;
    Ok(((t.t2, t.t3, t.t4), fit.accuracy))
}

#[pyfunction]
#[pyo3(signature = (before, after, stability_band = clinical::DEFAULT_STABILITY_BAND))]
fn dynamics(before: f64, after: f64, stability_band: f64) -> String {
    clinical::dynamics(before, after, stability_band).to_string()
}

#[pyfunction]
#[pyo3(signature = (share, step = 0.05))]
fn quantize_share(share: f64, step: f64) -> f64 {
    clinical::quantize_share(share, step)
}

/// Standard two-lung phantom. Returns `(ct, left, right, lesion, total_share)`.
#[pyfunction]
#[pyo3(signature = (dims, seed = 0, noise_hu = 0.0))]
fn make_phantom(
    dims: (usize, usize, usize),
    seed: u64,
    noise_hu: f64,
) -> PyResult<(PyCtVolume, PyMask, PyMask, PyMask, f64)> {
    let mut spec = synth::PhantomSpec::standard(dims_of(dims));
    spec.rng_seed = seed;
    spec.noise_hu = noise_hu;
    let p = synth::make_phantom(&spec).map_err(err)?;
    let s = spec.spacing;
    let mask = |m: BinaryMask| PyMask { inner: m, spacing: s };
    Ok((
        PyCtVolume { inner: p.volume },
        mask(p.left_lung),
        mask(p.right_lung),
        mask(p.lesion),
        p.shares.total(),
    ))
}

#[pyfunction]
#[pyo3(signature = (truth, sharpness = 3.0, error_rate = 0.0, seed = 0))]
fn simulate_model(truth: PyRef<'_, PyMask>, sharpness: f64, error_rate: f64, seed: u64) -> PyResult<PyProbability> {
    Ok(PyProbability {
        inner: synth::simulate_model(&truth.inner, sharpness, error_rate, seed).map_err(err)?,
    })
}

#[pymodule]
fn _lesionscope(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMask>()?;
    m.add_class::<PyProbability>()?;
    m.add_class::<PyCtVolume>()?;
    m.add_function(wrap_pyfunction!(read_volume, m)?)?;
    m.add_function(wrap_pyfunction!(parse_dicom_series, m)?)?;
    m.add_function(wrap_pyfunction!(dice, m)?)?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(panel_ground_truth, m)?)?;
    m.add_function(wrap_pyfunction!(paired_permutation_test, m)?)?;
    m.add_function(wrap_pyfunction!(mean_ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(unanimous_vote, m)?)?;
    m.add_function(wrap_pyfunction!(score_fusion, m)?)?;
    m.add_function(wrap_pyfunction!(lesion_share, m)?)?;
    m.add_function(wrap_pyfunction!(ct_class, m)?)?;
    m.add_function(wrap_pyfunction!(fit_ct_thresholds, m)?)?;
    m.add_function(wrap_pyfunction!(dynamics, m)?)?;
    m.add_function(wrap_pyfunction!(quantize_share, m)?)?;
    m.add_function(wrap_pyfunction!(make_phantom, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_model, m)?)?;
    Ok(())
}
