//! Format round-trips on randomized inputs: the canonical NPY encoder and
//! the record JSON layer.

use rand::Rng;

use projlens::npy::{encode_npy, load_matrix, save_matrix};
use projlens::pad_io::{emit_pad, parse_pad};
use projlens_core::mask_geom::{rle_encode, BinaryMask};
use projlens_core::pad::{MaskAnnotation, PadRecord};
use projlens_core::random::rng_from_seed;
use projlens_core::{DenseMatrix, Dtype};

/// save(load(f)) must equal the canonical re-encoding of f, for canonical
/// and non-canonical inputs alike, across dtypes and shapes.
#[test]
fn npy_roundtrip_100_random_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = rng_from_seed(41);
    for trial in 0..100 {
        let rows = rng.random_range(1..=64);
        let cols = rng.random_range(1..=128);
        let dtype = if trial % 2 == 0 {
            Dtype::F32
        } else {
            Dtype::F64
        };
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let v: f64 = rng.random_range(-1e3..1e3);
            // Keep f32 files exactly representable so equality is exact.
            data.push(if dtype == Dtype::F32 {
                v as f32 as f64
            } else {
                v
            });
        }
        let m = DenseMatrix::new(rows, cols, data)
            .unwrap()
            .with_dtype(dtype);

        // A non-canonical variant: same payload, Fortran order, oversized
        // header padding.
        let descr = if dtype == Dtype::F32 { "<f4" } else { "<f8" };
        let dict =
            format!("{{'descr': '{descr}', 'fortran_order': True, 'shape': ({rows}, {cols}), }}");
        let mut header = dict.into_bytes();
        let unpadded = 10 + header.len() + 1;
        let pad = (64 - unpadded % 64) % 64 + 128; // over-padded on purpose
        header.extend(std::iter::repeat_n(b' ', pad));
        header.push(b'\n');
        let mut noncanonical = b"\x93NUMPY\x01\x00".to_vec();
        noncanonical.extend_from_slice(&(header.len() as u16).to_le_bytes());
        noncanonical.extend_from_slice(&header);
        for j in 0..cols {
            for i in 0..rows {
                match dtype {
                    Dtype::F32 => {
                        noncanonical.extend_from_slice(&(m.get(i, j) as f32).to_le_bytes())
                    }
                    Dtype::F64 => noncanonical.extend_from_slice(&m.get(i, j).to_le_bytes()),
                }
            }
        }

        let path = dir.path().join(format!("m{trial}.npy"));
        std::fs::write(&path, &noncanonical).unwrap();
        let loaded = load_matrix(&path).unwrap();
        assert_eq!(loaded, m, "trial {trial}: element-wise load mismatch");

        let canon = dir.path().join(format!("c{trial}.npy"));
        save_matrix(&loaded, &canon).unwrap();
        let canon_bytes = std::fs::read(&canon).unwrap();
        assert_eq!(
            canon_bytes,
            encode_npy(&m),
            "trial {trial}: save(load(f)) is not the canonical re-encoding"
        );

        // And the canonical file is a fixed point.
        let reloaded = load_matrix(&canon).unwrap();
        assert_eq!(reloaded, m);
        assert_eq!(encode_npy(&reloaded), canon_bytes);
    }
}

fn random_mask(h: usize, w: usize, rng: &mut impl Rng) -> BinaryMask {
    let mut m = BinaryMask::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            if rng.random_range(0.0..1.0) < 0.5 {
                m.set(y, x, 1);
            }
        }
    }
    m
}

/// parse(emit(records)) must reproduce every field of every record.
#[test]
fn pad_roundtrip_randomized_records() {
    let mut rng = rng_from_seed(43);
    let path = std::path::Path::new("roundtrip.json");
    for _ in 0..50 {
        let n = rng.random_range(0..=5);
        let mut records = Vec::new();
        for i in 0..n {
            let w = rng.random_range(4..=32);
            let h = rng.random_range(4..=32);
            let n_labels = rng.random_range(0..=4);
            let mut labels = Vec::new();
            for li in 0..n_labels {
                let x1: f64 = rng.random_range(0.0..w as f64 / 2.0);
                let y1: f64 = rng.random_range(0.0..h as f64 / 2.0);
                let x2: f64 = rng.random_range(x1..w as f64);
                let y2: f64 = rng.random_range(y1..h as f64);
                let rle = if rng.random_range(0.0..1.0) < 0.7 {
                    Some(rle_encode(&random_mask(h, w, &mut rng)))
                } else {
                    None
                };
                labels.push(
                    MaskAnnotation::new(format!("tag{li}"), [x1, y1, x2, y2], rle, h, w).unwrap(),
                );
            }
            records.push(
                PadRecord::new(
                    format!("img/{i:03}.jpg"),
                    w,
                    h,
                    format!("caption {i}"),
                    labels,
                )
                .unwrap(),
            );
        }
        let emitted = emit_pad(&records);
        let back = parse_pad(&emitted, path).unwrap();
        assert_eq!(back, records);
        // Emission is canonical: a second pass is byte-identical.
        assert_eq!(emit_pad(&back), emitted);
    }
}
