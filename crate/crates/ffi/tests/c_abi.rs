use std::ffi::{c_char, CString};
use std::ptr;

use chemofluid_ffi::*;

const CONFIG: &str = "grid.cells = 8 6\nparams.s = 2\nparams.k = 0.05\nparams.t_end = 0.1\n\
initial.n0 = gaussian(0.5, 0.5, 0.2, 2, 0.1)\ninitial.c0 = constant(1)\ninitial.u0 = vortex(0.3)\npotential.phi = linear(0, -1)\n";

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    let n = unsafe { cf_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(511)].iter().map(|&b| b as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn create(text: &str) -> (CfStatus, *mut CfSimulation) {
    let text = CString::new(text).unwrap();
    let mut sim = ptr::null_mut();
    let status = unsafe { cf_simulation_new(text.as_ptr(), ptr::null(), &mut sim) };
    (status, sim)
}

#[test]
fn steps_to_end_and_copies_fields() {
    let (status, sim) = create(CONFIG);
    assert_eq!(status, CfStatus::Ok, "{}", last_error());
    unsafe {
        let mut grid = CfGridInfo::default();
        assert_eq!(cf_simulation_grid(sim, &mut grid), CfStatus::Ok);
        assert_eq!((grid.dim, grid.cells, grid.num_cells), (2, [8, 6, 1], 48));
        assert_eq!(grid.num_faces[2], 0);

        let mut initial = CfRecord::default();
        assert_eq!(cf_simulation_initial_record(sim, &mut initial), CfStatus::Ok);
        assert_eq!(initial.step, 0);

        let mut record = CfRecord::default();
        assert_eq!(cf_simulation_step(sim, &mut record), CfStatus::Ok);
        assert_eq!(cf_simulation_step(sim, &mut record), CfStatus::Ok);
        assert_eq!(record.step, 2);
        assert!((record.mass_n - initial.mass_n).abs() < 1e-10 * initial.mass_n);
        assert_eq!(cf_simulation_step(sim, &mut record), CfStatus::Finished);

        let mut len = 0usize;
        assert_eq!(cf_simulation_field_len(sim, CfField::U0, &mut len), CfStatus::Ok);
        assert_eq!(len as u64, grid.num_faces[0]);
        assert_eq!(cf_simulation_field_len(sim, CfField::U2, &mut len), CfStatus::InvalidArgument);

        let mut n = vec![0.0; 48];
        let mut c = vec![0.0; 48];
        let mut z = vec![0.0; 48];
        assert_eq!(cf_simulation_copy_field(sim, CfField::N, n.as_mut_ptr(), n.len()), CfStatus::Ok);
        assert_eq!(cf_simulation_copy_field(sim, CfField::C, c.as_mut_ptr(), c.len()), CfStatus::Ok);
        assert_eq!(cf_simulation_copy_field(sim, CfField::Z, z.as_mut_ptr(), z.len()), CfStatus::Ok);
        let cell_area = (1.0 / 8.0) * (1.0 / 6.0);
        let mass: f64 = n.iter().sum::<f64>() * cell_area;
        assert!((mass - record.mass_n).abs() < 1e-12 * mass.abs().max(1.0));
        assert!(z.iter().all(|&v| v >= record.min_z && v <= record.max_z));
        assert!(c.iter().zip(&z).all(|(c, z)| c.is_finite() && *z > 0.0));

        let mut short = vec![0.0; 10];
        assert_eq!(cf_simulation_copy_field(sim, CfField::N, short.as_mut_ptr(), short.len()), CfStatus::BufferTooSmall);
        assert!(last_error().contains("buffer"));

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("state.chfl").to_str().unwrap()).unwrap();
        assert_eq!(cf_simulation_write_checkpoint(sim, path.as_ptr()), CfStatus::Ok);
        assert!(dir.path().join("state.chfl").is_file());
        cf_simulation_free(sim);
    }
}

#[test]
fn reports_errors_without_panicking() {
    let (status, sim) = create("grid.cells = 8 8\nparams.s = 2\n");
    assert_eq!(status, CfStatus::Config);
    assert!(sim.is_null());
    assert!(!last_error().is_empty());

    let bad_alpha = CONFIG.replace("params.s = 2\n", "params.s = 2\nparams.alpha = 1.5\n");
    let (status, sim) = create(&bad_alpha);
    assert_eq!(status, CfStatus::InvalidParameters, "{}", last_error());
    assert!(sim.is_null());
    assert!(last_error().contains("alpha"));

    unsafe {
        assert_eq!(cf_simulation_step(ptr::null_mut(), ptr::null_mut()), CfStatus::NullPointer);
        assert_eq!(cf_simulation_new(ptr::null(), ptr::null(), &mut ptr::null_mut()), CfStatus::NullPointer);
        cf_simulation_free(ptr::null_mut());
    }
}

#[test]
fn identical_configs_step_identically() {
    let run = || {
        let (status, sim) = create(CONFIG);
        assert_eq!(status, CfStatus::Ok);
        let mut r = CfRecord::default();
        unsafe {
            while cf_simulation_step(sim, &mut r) == CfStatus::Ok {}
            let mut u = vec![0.0; 64];
            let mut len = 0;
            cf_simulation_field_len(sim, CfField::U1, &mut len);
            assert_eq!(cf_simulation_copy_field(sim, CfField::U1, u.as_mut_ptr(), u.len()), CfStatus::Ok);
            cf_simulation_free(sim);
            u.truncate(len);
            (r.energy_a.to_bits(), u.iter().map(|v| v.to_bits()).collect::<Vec<_>>())
        }
    };
    assert_eq!(run(), run());
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/chemofluid.h")).unwrap();
    for name in [
        "cf_version",
        "cf_last_error_message",
        "cf_simulation_new",
        "cf_simulation_free",
        "cf_simulation_grid",
        "cf_simulation_initial_record",
        "cf_simulation_step",
        "cf_simulation_field_len",
        "cf_simulation_copy_field",
        "cf_simulation_write_checkpoint",
        "typedef struct CfSimulation CfSimulation",
        "CF_STATUS_OK = 0",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
    let v = unsafe { std::ffi::CStr::from_ptr(cf_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
