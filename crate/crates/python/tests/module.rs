use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module<F: FnOnce(&Bound<'_, PyDict>)>(f: F) {
    Python::attach(|py| {
        let module = pyo3::wrap_pymodule!(qsrd::qsrd)(py);
        let globals = PyDict::new(py);
        globals.set_item("qsrd", module).unwrap();
        py.run(c"import json", Some(&globals), None).unwrap();
        f(&globals);
    });
}

fn eval<'py>(globals: &Bound<'py, PyDict>, code: &std::ffi::CStr) -> Bound<'py, PyAny> {
    globals.py().eval(code, Some(globals), None).unwrap()
}

#[test]
fn instance_and_pipeline_round_trip() {
    with_module(|g| {
        g.py()
            .run(
                c"inst = qsrd.Instance(2, beta=2.0, seed=5)\nproto = qsrd.Protocol.teleport(2, theta=0.1)\nreport = json.loads(qsrd.pipeline(inst, proto, 0.25))",
                Some(g),
                None,
            )
            .unwrap();
        assert!(eval(g, c"report['pass']").extract::<bool>().unwrap());
        assert_eq!(eval(g, c"report['rounds']").extract::<usize>().unwrap(), 1);
        let residual: f64 = eval(g, c"inst.omega_relation_residual()").extract().unwrap();
        assert!(residual < 1e-10);
    });
}

#[test]
fn theorem_and_truncation() {
    with_module(|g| {
        let status: String = eval(g, c"qsrd.theorem('transfer', 1.0, 0.001)['status']")
            .extract()
            .unwrap();
        assert_eq!(status, "infeasible");
        let worst: f64 = eval(
            g,
            c"qsrd.truncate([([1], 0.9), ([64], 0.1)], 0.2, 0.6)['worst_case_cost']",
        )
        .extract()
        .unwrap();
        assert_eq!(worst, 1.0);
    });
}

#[test]
fn errors_surface_as_value_error() {
    with_module(|g| {
        let py = g.py();
        let e = eval(g, c"qsrd.Instance").call1((1,)).unwrap_err();
        assert!(e.is_instance_of::<pyo3::exceptions::PyValueError>(py));
        let args = (eval(g, c"qsrd.Instance(2)"), eval(g, c"qsrd.Protocol.teleport(2)"), 0.0);
        let e = eval(g, c"qsrd.pipeline").call1(args).unwrap_err();
        assert!(e.to_string().contains("0 < μ < 1"));
    });
}

#[test]
fn optimizer_values_on_a_bell_state() {
    with_module(|g| {
        g.py()
            .run(
                c"bell = [[0.5 if i in (0, 3) and j in (0, 3) else 0.0 for j in range(4)] for i in range(4)]",
                Some(g),
                None,
            )
            .unwrap();
        let i: f64 = eval(g, c"qsrd.imax(bell, (2, 2))").extract().unwrap();
        let h: f64 = eval(g, c"qsrd.hmin(bell, (2, 2))").extract().unwrap();
        assert!((i - 2.0).abs() < 1e-6);
        assert!((h + 1.0).abs() < 1e-6);
    });
}
