use std::io::Write;

use bnf_core::bitplane::{decompose, to_fixed_point, Container, FixedTensor, Shape};
use bnf_core::data::{generate_synthetic, load_timeseries_csv, window, CsvConfig, FixedDataset, SynthKind, SynthSpec};
use bnf_core::Tensor;

#[test]
fn container_reserialization_is_byte_identical() {
    let fixed = FixedTensor::new(Shape::hwc(2, 3, 2).unwrap(), 12, (0..12).map(|v| v * 300).collect()).unwrap();
    let containers = [
        Container::real(&Tensor::from_vec(&[2, 2], vec![0.5, -1.25, 3.0, 1e-3]).unwrap()).unwrap(),
        Container::Fixed(fixed.clone()),
        Container::Bits(decompose(&fixed)),
        Container::Fixed(FixedTensor::new(Shape::new(&[5]).unwrap(), 3, vec![0, 1, 2, 7, 5]).unwrap()),
    ];
    let dir = tempfile::tempdir().unwrap();
    for (i, c) in containers.iter().enumerate() {
        let p = dir.path().join(format!("{i}.bnt"));
        c.write(&p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let back = Container::read(&p).unwrap();
        assert_eq!(&back, c);
        assert_eq!(back.encode(), bytes);
    }
}

#[test]
fn container_rejects_corruption() {
    let c = Container::Fixed(FixedTensor::new(Shape::new(&[3]).unwrap(), 4, vec![1, 2, 3]).unwrap());
    let bytes = c.encode();
    assert!(Container::decode(&bytes[..bytes.len() - 1]).is_err());
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(Container::decode(&extra).is_err());
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(Container::decode(&bad_magic).is_err());
    let mut too_big = bytes;
    let last = too_big.len() - 1;
    too_big[last] = 16;
    assert!(Container::decode(&too_big).is_err());
}

#[test]
fn to_fixed_point_examples() {
    let t = Tensor::from_vec(&[3], vec![0.0, 1.0, 0.5]).unwrap();
    assert_eq!(to_fixed_point(&t, 0.0, 1.0, 8).unwrap().values(), &[0, 255, 128]);
    assert!(to_fixed_point(&Tensor::from_vec(&[1], vec![f64::NAN]).unwrap(), 0.0, 1.0, 8).is_err());
    assert!(to_fixed_point(&t, 1.0, 1.0, 8).is_err());
}

#[test]
fn csv_to_windows_to_fixed() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(f, "time,label,subject,a,b").unwrap();
    for t in 0..10 {
        writeln!(f, "{t},{},{},{},{}", if t < 6 { 3 } else { 5 }, 1, t as f64 * 0.1, 10 - t).unwrap();
    }
    for t in 0..5 {
        writeln!(f, "{t},5,2,{},{}", t, t).unwrap();
    }
    let cfg: CsvConfig = serde_json::from_str(
        r#"{"has_header":true,"columns":["a","b"],"label_column":"label","subject_column":"subject","label_map":{"3":0,"5":1}}"#,
    )
    .unwrap();
    let series = load_timeseries_csv(f.path(), &cfg).unwrap();
    assert_eq!(series.rows(), 15);
    let w = window(&series, 5, 5).unwrap();
    // Subject 1 gives 2 windows, subject 2 one.
    assert_eq!(w.len(), 3);
    assert_eq!(w.labels, [0, 1, 1]);
    assert_eq!(w.subjects, [1, 1, 2]);
    assert_eq!(w.sample_rate_hz, 100.0);
    let ds = w.to_fixed(&w.channel_ranges(), 8, 2).unwrap();
    assert_eq!(ds.shape().dims(), &[2, 5, 1]);
    assert_eq!(ds.sample_values(0)[0], 0);
}

#[test]
fn window_count_closed_form() {
    for (t, len, stride) in [(100usize, 100usize, 100usize), (10, 5, 5), (37, 8, 3), (20, 1, 1), (9, 10, 1)] {
        let series = bnf_core::data::RawSeries {
            channels: 1,
            values: vec![0.0; t],
            labels: vec![0; t],
            subjects: vec![0; t],
            sample_rate_hz: 100.0,
            dropped: 0,
            unmapped: 0,
        };
        let expected = if t >= len { (t - len) / stride + 1 } else { 0 };
        assert_eq!(window(&series, len, stride).unwrap().len(), expected, "T={t} len={len} stride={stride}");
    }
}

#[test]
fn parity_generator_is_balanced() {
    let spec = SynthSpec::new(SynthKind::BitParity, Shape::hwc(1, 4, 1).unwrap(), 8, 5000, 11);
    let ds = generate_synthetic(&spec).unwrap();
    let ones = ds.labels().iter().filter(|&&l| l == 1).count() as f64 / ds.len() as f64;
    assert!((ones - 0.5).abs() <= 0.01);
    assert_eq!(ds, generate_synthetic(&spec).unwrap());
}

#[test]
fn dataset_containers_round_trip_through_files() {
    let ds = generate_synthetic(&SynthSpec::new(SynthKind::Linear, Shape::hwc(2, 3, 1).unwrap(), 6, 5, 1)).unwrap();
    let (x, y, s) = ds.to_containers().unwrap();
    let dir = tempfile::tempdir().unwrap();
    x.write(dir.path().join("x.bnt")).unwrap();
    y.write(dir.path().join("y.bnt")).unwrap();
    let back = FixedDataset::from_containers(
        &Container::read(dir.path().join("x.bnt")).unwrap(),
        &Container::read(dir.path().join("y.bnt")).unwrap(),
        Some(&s),
        None,
    )
    .unwrap();
    assert_eq!(back, ds);
}
