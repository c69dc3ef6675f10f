use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use pc_engine_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    unsafe {
        pc_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn mlp(dims: &[usize], act: u32, loss: u32) -> *mut PcNetwork {
    let mut net = ptr::null_mut();
    let st = unsafe { pc_network_mlp(dims.as_ptr(), dims.len(), act, 0, loss, 1.0, 7, &mut net) };
    assert_eq!(st, PcStatus::Ok, "{}", last_error());
    net
}

#[test]
fn create_query_free() {
    let net = mlp(&[3, 5, 2], 1, 0);
    let (mut i, mut o, mut h) = (0, 0, 0);
    assert_eq!(unsafe { pc_network_shape(net, &mut i, &mut o, &mut h) }, PcStatus::Ok);
    assert_eq!((i, o, h), (3, 2, 1));
    unsafe { pc_network_free(net) };
    unsafe { pc_network_free(ptr::null_mut()) };
}

#[test]
fn null_and_bad_codes_are_reported() {
    let mut net = ptr::null_mut();
    let dims = [3usize, 4, 2];
    let st = unsafe { pc_network_mlp(dims.as_ptr(), 3, 99, 0, 0, 1.0, 0, &mut net) };
    assert_eq!(st, PcStatus::InvalidArgument);
    assert!(last_error().contains("activation"));
    assert_eq!(unsafe { pc_network_shape(ptr::null(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut()) }, PcStatus::NullPointer);
    let net = mlp(&dims, 0, 0);
    let x = [0.0; 3];
    let y = [0.0; 2];
    let mut e = [0.0; 4];
    assert_eq!(unsafe { pc_relax(net, 7, x.as_ptr(), y.as_ptr(), 1, 0.1, 3, e.as_mut_ptr(), 4) }, PcStatus::InvalidArgument);
    assert_eq!(unsafe { pc_relax(net, 0, x.as_ptr(), y.as_ptr(), 1, 0.1, 3, e.as_mut_ptr(), 3) }, PcStatus::DimensionMismatch);
    unsafe { pc_network_free(net) };
}

#[test]
fn forward_matches_library() {
    let net = mlp(&[2, 3, 2], 4, 0);
    let x = [0.5, -1.0, 2.0, 0.25];
    let mut out = [0.0; 4];
    assert_eq!(unsafe { pc_network_forward(net, x.as_ptr(), 2, out.as_mut_ptr(), 4) }, PcStatus::Ok);
    let spec = pc_engine::model::MlpSpec {
        dims: vec![2, 3, 2],
        activation: pc_engine::model::Activation::Gelu,
        output_activation: pc_engine::model::Activation::Identity,
        loss: pc_engine::model::Loss::Mse,
        gain: 1.0,
    };
    let lib = pc_engine::model::Network::mlp(&spec, &mut pc_engine::numeric::Rng::new(7)).unwrap();
    let xm = pc_engine::numeric::Matrix::from_vec(2, 2, x.to_vec()).unwrap();
    assert_eq!(lib.forward(&xm).unwrap().y_hat.data(), &out);
    unsafe { pc_network_free(net) };
}

#[test]
fn relax_energy_decreases() {
    let net = mlp(&[3, 4, 4, 2], 1, 0);
    let x = [0.3, -0.2, 1.0];
    let y = [1.0, -1.0];
    for algo in [PcAlgo::Spc as u32, PcAlgo::Epc as u32] {
        let mut e = [0.0; 21];
        assert_eq!(unsafe { pc_relax(net, algo, x.as_ptr(), y.as_ptr(), 1, 0.1, 20, e.as_mut_ptr(), 21) }, PcStatus::Ok);
        assert!(e[20] < e[0], "{algo}: {e:?}");
    }
    unsafe { pc_network_free(net) };
}

#[test]
fn save_load_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("n.pcn1").to_str().unwrap()).unwrap();
    let net = mlp(&[2, 3, 1], 2, 0);
    assert_eq!(unsafe { pc_network_save(net, path.as_ptr()) }, PcStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { pc_network_load(path.as_ptr(), &mut back) }, PcStatus::Ok);
    let x = [0.7, -0.3];
    let (mut a, mut b) = ([0.0], [0.0]);
    unsafe {
        pc_network_forward(net, x.as_ptr(), 1, a.as_mut_ptr(), 1);
        pc_network_forward(back, x.as_ptr(), 1, b.as_mut_ptr(), 1);
    }
    assert_eq!(a, b);
    let missing = CString::new(dir.path().join("none.pcn1").to_str().unwrap()).unwrap();
    let mut none = ptr::null_mut();
    assert_eq!(unsafe { pc_network_load(missing.as_ptr(), &mut none) }, PcStatus::Io);
    assert!(none.is_null());
    unsafe {
        pc_network_free(net);
        pc_network_free(back);
    }
}

#[test]
fn binomial_and_verify() {
    let mut v = 0.0;
    assert_eq!(unsafe { pc_binomial_log_magnitude(0.1, 2, 1, &mut v) }, PcStatus::Ok);
    assert!((v.exp() - 0.18).abs() < 1e-15);
    assert_eq!(unsafe { pc_binomial_log_magnitude(1.5, 2, 1, &mut v) }, PcStatus::InvalidArgument);
    let mut passed = 0;
    assert_eq!(unsafe { pc_verify(1, 2, &mut passed) }, PcStatus::Ok);
    assert_eq!(passed, 1);
    let version = unsafe { CStr::from_ptr(pc_version()) };
    assert_eq!(version.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("pc_engine.h")
}

#[test]
fn header_declares_every_export() {
    let h = std::fs::read_to_string(header()).unwrap();
    for f in [
        "pc_last_error_message",
        "pc_version",
        "pc_network_mlp",
        "pc_network_load",
        "pc_network_save",
        "pc_network_free",
        "pc_network_shape",
        "pc_network_forward",
        "pc_relax",
        "pc_binomial_log_magnitude",
        "pc_verify",
        "typedef struct PcNetwork PcNetwork",
        "PC_STATUS_OK = 0",
        "PC_ALGO_EPC = 1",
    ] {
        assert!(h.contains(f), "missing {f}");
    }
}

#[test]
fn header_compiles_as_c() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let probe = Command::new(&cc).arg("--version").output();
    if probe.is_err() {
        eprintln!("no C compiler found; header compile check not run");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"pc_engine.h\"\nint main(void) { PcNetwork *n = 0; size_t d[3] = {2, 3, 1};\n\
         PcStatus s = pc_network_mlp(d, 3, 0, 0, 0, 1.0, 0, &n); pc_network_free(n); return (int)s; }\n",
    )
    .unwrap();
    let out = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header().parent().unwrap())
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
