use std::path::Path;

use resist_core::graph::DirectedGraph;
use resist_sim::formats::{
    encode_idx, load_edge_list, load_idx, parse_edge_list, parse_idx, write_edge_list, FormatError,
};

fn be(v: u32) -> [u8; 4] {
    v.to_be_bytes()
}

/// Two 28x28 images and their labels, written byte by byte.
fn fixture() -> (Vec<u8>, Vec<u8>) {
    let mut images = Vec::new();
    images.extend(be(0x0803));
    images.extend(be(2));
    images.extend(be(28));
    images.extend(be(28));
    images.extend((0..784).map(|i| (i % 256) as u8));
    images.extend(std::iter::repeat_n(255u8, 784));
    let mut labels = Vec::new();
    labels.extend(be(0x0801));
    labels.extend(be(2));
    labels.extend([7u8, 3]);
    (images, labels)
}

#[test]
fn idx_fixture_reads_back() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = fixture();
    let (ip, lp) = (dir.path().join("img.idx"), dir.path().join("lab.idx"));
    std::fs::write(&ip, &img).unwrap();
    std::fs::write(&lp, &lab).unwrap();
    let data = load_idx(&ip, &lp).unwrap();
    assert_eq!(data.len(), 2);
    assert_eq!(data.labels, vec![7, 3]);
    let first = data.sample(0);
    let second = data.sample(1);
    assert_eq!((first.len(), second.len()), (784, 784));
    assert_eq!(first[1], 1.0 / 255.0);
    assert_eq!(first[300], (300 % 256) as f64 / 255.0);
    assert!(second.iter().all(|&v| v == 1.0));
    assert!(first.iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn encoder_matches_hand_written_fixture() {
    let (img, lab) = fixture();
    let pixels = vec![
        (0..784).map(|i| (i % 256) as u8).collect(),
        vec![255u8; 784],
    ];
    assert_eq!(encode_idx(&pixels, 28, 28, &[7, 3]), (img, lab));
}

#[test]
fn bad_magic() {
    let (mut img, lab) = fixture();
    img[3] = 0x01;
    let err = parse_idx(&img, &lab, Path::new("i"), Path::new("l")).unwrap_err();
    assert!(
        matches!(
            err,
            FormatError::BadMagic {
                expected: 0x0803,
                found: 0x0801,
                ..
            }
        ),
        "{err}"
    );
    assert!(err.to_string().contains("bad magic"));
}

#[test]
fn count_mismatch() {
    let (img, mut lab) = fixture();
    lab[7] = 3;
    lab.push(1);
    let err = parse_idx(&img, &lab, Path::new("i"), Path::new("l")).unwrap_err();
    assert!(
        matches!(
            err,
            FormatError::CountMismatch {
                images: 2,
                labels: 3
            }
        ),
        "{err}"
    );
    assert!(err.to_string().contains("count mismatch"));
}

#[test]
fn truncated() {
    let (img, lab) = fixture();
    let err = parse_idx(&img[..img.len() - 10], &lab, Path::new("i"), Path::new("l")).unwrap_err();
    assert!(matches!(err, FormatError::Truncated { .. }), "{err}");
    let err = parse_idx(&img[..6], &lab, Path::new("i"), Path::new("l")).unwrap_err();
    assert!(matches!(err, FormatError::Truncated { .. }), "{err}");
}

#[test]
fn missing_file_is_io() {
    let err = load_idx(Path::new("/nonexistent/a"), Path::new("/nonexistent/b")).unwrap_err();
    assert!(err.is_io());
}

#[test]
fn edge_list_round_trip() {
    let g = DirectedGraph::from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)]).unwrap();
    let text = write_edge_list(&g);
    let back = parse_edge_list(&text, Path::new("g.txt")).unwrap();
    assert_eq!(back.edges(), g.edges());
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("g.txt");
    std::fs::write(&p, &text).unwrap();
    assert_eq!(load_edge_list(&p).unwrap(), back);
}

#[test]
fn edge_list_comments_and_errors() {
    let g = parse_edge_list("# ring\n3\n0 1\n\n1 2 # tail\n2 0\n", Path::new("g")).unwrap();
    assert_eq!(g.edge_count(), 3);
    for bad in ["3\n0 5\n", "3\n0\n", "x\n", "3\n1 1\n"] {
        let err = parse_edge_list(bad, Path::new("g")).unwrap_err();
        assert!(
            matches!(err, FormatError::EdgeList { .. }),
            "{bad:?}: {err}"
        );
    }
}
