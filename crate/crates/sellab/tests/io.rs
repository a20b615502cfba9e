use std::io::Cursor;

use sellab::config::{method_settings, parse_methods, FileConfig};
use sellab::io::*;
use sellab::report::{fmt_real, write_mc_csv};
use sellab_core::simlab::{generate_dataset, run_monte_carlo, DgpSpec, ErrorLaw, Method, MethodSettings};
use sellab_core::stage1::SieveOrder;

fn schema() -> CsvSchema {
    CsvSchema {
        selection_normalized: "exper".into(),
        selection_free: vec!["age".into(), "kids".into()],
        outcome_normalized: "educ".into(),
        outcome_free: vec!["city".into()],
        d: "works".into(),
        y: "high".into(),
        selection_sign: 1.0,
        outcome_sign: -1.0,
    }
}

const SMALL: &str = "exper,age,kids,educ,city,works,high\n\
                     1.5,30,0,12,1,1,1\n\
                     2.0,41,2,16,0,0,\n\
                     0.5,25,1,10,1,1,0\n\
                     3.0,50,3,14,0,1,1\n";

fn load(text: &str, opts: LoadOptions) -> Result<sellab_core::Dataset, IoError> {
    load_csv_from(Cursor::new(text.as_bytes()), &schema(), opts)
}

#[test]
fn standardized_columns_have_zero_mean_unit_variance() {
    let data = load(SMALL, LoadOptions { standardize: true, ..Default::default() }).unwrap();
    for m in [data.z(), data.x()] {
        for j in 0..m.cols() {
            let c = m.column(j);
            let n = c.len() as f64;
            let mean = c.iter().sum::<f64>() / n;
            let var = c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-10);
        }
    }
    // normalized columns are passed through, with the configured sign
    assert_eq!(data.z0(), &[1.5, 2.0, 0.5, 3.0]);
    assert_eq!(data.x0(), &[-12.0, -16.0, -10.0, -14.0]);
    assert_eq!(data.y(), &[Some(true), None, Some(false), Some(true)]);
}

#[test]
fn outcome_where_not_selected_is_rejected_with_row() {
    let bad = SMALL.replace("2.0,41,2,16,0,0,", "2.0,41,2,16,0,0,1");
    let err = load(&bad, LoadOptions::default()).unwrap_err();
    match err {
        IoError::Schema { row, column, .. } => assert_eq!((row, column.as_str()), (2, "high")),
        other => panic!("{other}"),
    }
    let missing = SMALL.replace("0.5,25,1,10,1,1,0", "0.5,25,1,10,1,1,");
    assert!(matches!(load(&missing, LoadOptions::default()), Err(IoError::Schema { row: 3, .. })));
    let nonbinary = SMALL.replace("3.0,50,3,14,0,1,1", "3.0,50,3,14,0,2,1");
    assert!(matches!(load(&nonbinary, LoadOptions::default()), Err(IoError::Schema { row: 4, .. })));
    let text = SMALL.replace("30", "thirty");
    assert!(matches!(load(&text, LoadOptions::default()), Err(IoError::Schema { row: 1, .. })));
    let no_col = SMALL.replace("kids", "children");
    assert!(matches!(load(&no_col, LoadOptions::default()), Err(IoError::MissingColumn(c)) if c == "kids"));
}

#[test]
fn constant_free_column_cannot_be_standardized() {
    let flat = "exper,age,kids,educ,city,works,high\n1,5,0,1,1,1,1\n2,5,1,1,0,0,\n";
    assert!(matches!(
        load(flat, LoadOptions { standardize: true, ..Default::default() }),
        Err(IoError::Constant(c)) if c == "age"
    ));
}

#[test]
fn write_then_load_reproduces_dataset() {
    for law in [ErrorLaw::NormalPair, ErrorLaw::CauchyPair] {
        let spec = DgpSpec::new(500, 3, law, 12);
        let data = generate_dataset(&spec).unwrap();
        let schema = CsvSchema::simulated(3, 3);
        let mut buf = Vec::new();
        write_csv_to(&mut buf, &data, &schema).unwrap();
        let back = load_csv_from(Cursor::new(&buf), &schema, LoadOptions::default()).unwrap();
        assert_eq!(back, data);
    }
}

#[test]
fn header_inference_finds_simulated_layout() {
    let header: Vec<String> = ["z0", "z1", "z2", "x0", "x1", "d", "y", "z01", "zz"].iter().map(|s| s.to_string()).collect();
    let s = CsvSchema::infer(&header);
    assert_eq!(s.selection_free, vec!["z1", "z2"]);
    assert_eq!(s.outcome_free, vec!["x1"]);
    assert_eq!(s.selection_normalized, "z0");
}

#[test]
fn median_binarization() {
    let v = [Some(3.0), None, Some(1.0), Some(2.0), Some(10.0)];
    assert_eq!(binarize_at_median(&v), vec![Some(true), None, Some(false), Some(false), Some(true)]);
    let text = SMALL.replace(",1,1\n", ",1,7.5\n").replace(",1,0\n", ",1,2.5\n");
    let data = load(&text, LoadOptions { binarize_outcome: true, ..Default::default() }).unwrap();
    // selected outcomes 7.5, 2.5, 7.5 have median 7.5
    assert_eq!(data.y(), &[Some(false), None, Some(false), Some(false)]);
}

#[test]
fn report_reals_round_trip() {
    for v in [0.1, 1.0 / 3.0, -2.5e-17, 123456789.123456789, f64::MIN_POSITIVE, 1e300] {
        assert_eq!(fmt_real(v).parse::<f64>().unwrap(), v);
    }
    let spec = DgpSpec::new(300, 2, ErrorLaw::NormalPair, 3);
    let report = run_monte_carlo(&spec, &[Method::SieveGd], 2, &MethodSettings::default(), || 0.0).unwrap();
    let mut buf = Vec::new();
    write_mc_csv(&mut buf, &report).unwrap();
    let mut rdr = csv::Reader::from_reader(&buf[..]);
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        ["method", "coefficient", "estimate", "bias", "rmse", "time_seconds"]
    );
    let beta = report.methods[0].beta.as_ref().unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    let b1 = rows.iter().find(|r| &r[1] == "beta1").unwrap();
    assert_eq!(b1[3].parse::<f64>().unwrap(), beta.bias[0]);
    assert_eq!(b1[4].parse::<f64>().unwrap(), beta.rmse[0]);
    let agg = rows.iter().find(|r| &r[1] == "B-beta").unwrap();
    assert_eq!(agg[3].parse::<f64>().unwrap(), beta.agg_bias);
}

#[test]
fn config_rejects_unknown_keys() {
    assert!(FileConfig::parse("[design]\nn = 10\nwidth = 3\n").is_err());
    assert!(FileConfig::parse("colour = 1\n").is_err());
    assert!(FileConfig::parse("[first_stage]\nsieve_order = \"auto\"\nlearning_rate = 0.5\n").is_ok());
}

#[test]
fn config_maps_to_settings() {
    let f = FileConfig::parse(
        "methods = [\"sieve\", \"mle\"]\n\
         [first_stage]\nsieve_order = 3\n\
         [sieve]\nmax_sieve_order = 4\nlearning_rate = 0.5\n\
         [matching]\nneighbors = 3\nstability_rounds = 20\n\
         [parametric]\nrestarts = 0\n",
    )
    .unwrap();
    let s = method_settings(&f).unwrap();
    assert_eq!(s.first_stage.sieve_order, SieveOrder::Fixed(3));
    assert_eq!(s.sieve.sieve_order, SieveOrder::Auto(vec![1, 2, 3, 4]));
    assert_eq!(s.sieve.learning_rate, 0.5);
    assert_eq!((s.neighbors, s.matching_termination.stability_rounds), (3, 20));
    assert_eq!(s.parametric.restarts, 0);
    assert_eq!(parse_methods(f.methods.as_ref().unwrap()).unwrap(), vec![Method::SieveGd, Method::Mle]);

    for bad in [
        "[first_stage]\nsieve_order = \"big\"\n",
        "[sieve]\nlearning_rate = -1.0\n",
        "[matching]\nneighbors = 0\n",
        "[first_stage]\nmax_sieve_order = 0\n",
    ] {
        assert!(method_settings(&FileConfig::parse(bad).unwrap()).is_err(), "{bad}");
    }
    assert!(parse_methods(&["mle", "MLE"]).is_err());
    assert!(parse_methods(&["probit"]).is_err());
}
