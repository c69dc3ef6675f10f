//! C ABI over `pc_engine`. Networks are opaque handles; every call returns a
//! [`PcStatus`] and failures leave a thread-local message readable with
//! [`pc_last_error_message`]. Arrays are row-major `double`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use pc_engine::analysis::{binomial_magnitude, DecayModel};
use pc_engine::epc::{epc_relax, EpcRelaxConfig};
use pc_engine::model::{load_network, save_network, Activation, Loss, MlpSpec, Network};
use pc_engine::numeric::{Matrix, Rng};
use pc_engine::spc::spc_relax;
use pc_engine::verify::{run_verify, VerifyConfig};
use pc_engine::{PcError, RelaxConfig};

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Numerical = 4,
    Io = 5,
    Format = 6,
    Contract = 7,
    Panic = 8,
}

/// Algorithm codes accepted by [`pc_relax`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcAlgo {
    Spc = 0,
    Epc = 1,
}

/// Opaque network handle.
pub struct PcNetwork {
    inner: Network,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(err: &PcError) -> PcStatus {
    match err {
        PcError::DimensionMismatch { .. } | PcError::CapExceeded { .. } => PcStatus::DimensionMismatch,
        PcError::Singular { .. } | PcError::Divergence { .. } | PcError::NonFinite { .. } | PcError::Domain(_) => {
            PcStatus::Numerical
        }
        PcError::Io { .. } => PcStatus::Io,
        PcError::BadMagic { .. }
        | PcError::Truncated { .. }
        | PcError::CountMismatch { .. }
        | PcError::Parse { .. }
        | PcError::Json(_)
        | PcError::Csv(_) => PcStatus::Format,
        PcError::Contract(_) | PcError::NotOneHot { .. } => PcStatus::Contract,
        PcError::InvalidConfig(_) => PcStatus::InvalidArgument,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            PcStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PcStatus::Panic
        }
    }
}

struct Failure(PcStatus, String);

impl From<PcError> for Failure {
    fn from(e: PcError) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(PcStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(PcStatus::InvalidArgument, msg.into())
}

unsafe fn net_ref<'a>(net: *const PcNetwork) -> Result<&'a Network, Failure> {
    net.as_ref().map(|n| &n.inner).ok_or_else(|| null("network"))
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, Failure> {
    if path.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(path).to_str().map_err(|_| invalid("path is not UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn matrix_arg(data: *const f64, rows: usize, cols: usize, what: &str) -> Result<Matrix, Failure> {
    if data.is_null() {
        return Err(null(what));
    }
    let v = std::slice::from_raw_parts(data, rows * cols).to_vec();
    Ok(Matrix::from_vec(rows, cols, v)?)
}

fn activation_arg(code: u32) -> Result<Activation, Failure> {
    u8::try_from(code)
        .ok()
        .and_then(Activation::from_code)
        .ok_or_else(|| invalid(format!("unknown activation code {code}")))
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be valid for `len` bytes or null.
#[no_mangle]
pub unsafe extern "C" fn pc_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Orthogonally initialized MLP with zero biases. `dims` holds `n_dims ≥ 3`
/// widths, input first. Activation codes: 0 identity, 1 tanh, 2 relu,
/// 3 leaky relu, 4 gelu, 5 sigmoid. Loss codes: 0 mse, 1 cross-entropy.
///
/// # Safety
/// `dims` must point to `n_dims` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pc_network_mlp(
    dims: *const usize,
    n_dims: usize,
    activation: u32,
    output_activation: u32,
    loss: u32,
    gain: f64,
    seed: u64,
    out: *mut *mut PcNetwork,
) -> PcStatus {
    guard(|| {
        if dims.is_null() {
            return Err(null("dims"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = MlpSpec {
            dims: std::slice::from_raw_parts(dims, n_dims).to_vec(),
            activation: activation_arg(activation)?,
            output_activation: activation_arg(output_activation)?,
            loss: u8::try_from(loss)
                .ok()
                .and_then(Loss::from_code)
                .ok_or_else(|| invalid(format!("unknown loss code {loss}")))?,
            gain,
        };
        if spec.dims.len() < 3 || spec.dims.contains(&0) {
            return Err(invalid("need at least three positive widths"));
        }
        let net = Network::mlp(&spec, &mut Rng::new(seed))?;
        *out = Box::into_raw(Box::new(PcNetwork { inner: net }));
        Ok(())
    })
}

/// Loads a PCN1 file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pc_network_load(path: *const c_char, out: *mut *mut PcNetwork) -> PcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let net = load_network(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(PcNetwork { inner: net }));
        Ok(())
    })
}

/// Writes a PCN1 file plus its JSON descriptor.
///
/// # Safety
/// `net` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn pc_network_save(net: *const PcNetwork, path: *const c_char) -> PcStatus {
    guard(|| {
        save_network(net_ref(net)?, path_arg(path)?)?;
        Ok(())
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `net` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pc_network_free(net: *mut PcNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Input width, output width and number of hidden state layers.
///
/// # Safety
/// `net` must come from this library; output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn pc_network_shape(
    net: *const PcNetwork,
    input_dim: *mut usize,
    output_dim: *mut usize,
    hidden_layers: *mut usize,
) -> PcStatus {
    guard(|| {
        let n = net_ref(net)?;
        if let Some(p) = input_dim.as_mut() {
            *p = n.input_dim();
        }
        if let Some(p) = output_dim.as_mut() {
            *p = n.output_dim();
        }
        if let Some(p) = hidden_layers.as_mut() {
            *p = n.num_hidden();
        }
        Ok(())
    })
}

/// Feedforward output for `batch` rows of `x`; writes `batch × output_dim`
/// values to `out` (capacity `out_len`).
///
/// # Safety
/// `x` must hold `batch × input_dim` values and `out` `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn pc_network_forward(
    net: *const PcNetwork,
    x: *const f64,
    batch: usize,
    out: *mut f64,
    out_len: usize,
) -> PcStatus {
    guard(|| {
        let n = net_ref(net)?;
        let x = matrix_arg(x, batch, n.input_dim(), "x")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let y = n.forward(&x)?.y_hat;
        if out_len < y.data().len() {
            return Err(Failure(
                PcStatus::DimensionMismatch,
                format!("out holds {out_len} values, need {}", y.data().len()),
            ));
        }
        ptr::copy_nonoverlapping(y.data().as_ptr(), out, y.data().len());
        Ok(())
    })
}

/// Relaxes one batch (`algo` is a [`PcAlgo`] code) with `steps` SGD updates of size `lr` and writes the
/// mean total energy before each update and after the last one
/// (`steps + 1` values) to `energies`.
///
/// # Safety
/// `x`, `y` must hold `batch × input_dim` and `batch × output_dim` values;
/// `energies` must hold `energies_len` values.
#[no_mangle]
pub unsafe extern "C" fn pc_relax(
    net: *const PcNetwork,
    algo: u32,
    x: *const f64,
    y: *const f64,
    batch: usize,
    lr: f64,
    steps: usize,
    energies: *mut f64,
    energies_len: usize,
) -> PcStatus {
    guard(|| {
        let n = net_ref(net)?;
        let x = matrix_arg(x, batch, n.input_dim(), "x")?;
        let y = matrix_arg(y, batch, n.output_dim(), "y")?;
        if energies.is_null() {
            return Err(null("energies"));
        }
        if energies_len < steps + 1 {
            return Err(Failure(
                PcStatus::DimensionMismatch,
                format!("energies holds {energies_len} values, need {}", steps + 1),
            ));
        }
        let cfg = RelaxConfig::new(lr, steps);
        let trace = match algo {
            a if a == PcAlgo::Spc as u32 => spc_relax(n, &x, &y, &cfg)?.1,
            a if a == PcAlgo::Epc as u32 => {
                let mut c = EpcRelaxConfig::from(cfg);
                c.guard_backprop_regime = false;
                epc_relax(n, &x, &y, &c)?.1
            }
            other => return Err(invalid(format!("unknown algorithm code {other}"))),
        };
        for (k, r) in trace.records.iter().enumerate() {
            *energies.add(k) = r.energy.total;
        }
        Ok(())
    })
}

/// Natural log of `C(t,i) λⁱ (1−λ)^{t−i}`; `-inf` when `i > t`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pc_binomial_log_magnitude(lr: f64, t: u64, i: u64, out: *mut f64) -> PcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let layers = usize::try_from(i).map_err(|_| invalid("layer index too large"))?;
        let model = DecayModel::new(layers, lr)?;
        *out = binomial_magnitude(&model, t, i);
        Ok(())
    })
}

/// Runs the randomized equivalence suite with `nets` networks per check;
/// `passed` receives 1 when every check holds.
///
/// # Safety
/// `passed` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pc_verify(seed: u64, nets: usize, passed: *mut i32) -> PcStatus {
    guard(|| {
        if passed.is_null() {
            return Err(null("passed"));
        }
        let rep = run_verify(&VerifyConfig {
            seed,
            nets,
            ..Default::default()
        })?;
        *passed = i32::from(rep.passed);
        Ok(())
    })
}
