//! Lattice generator and graph queries against independent constructions.

use std::collections::BTreeSet;

use qrowhammer::topology::{
    generate_heavy_hex, generate_heavy_hex_127, hammer_neighborhood, CouplingMap, HeavyHexLayout, QubitId,
};

/// Published Eagle r1 coupling: seven rows joined by four vertical
/// connectors per gap, written out by hand.
fn eagle_edges() -> BTreeSet<(usize, usize)> {
    let mut e = BTreeSet::new();
    let rows: [(usize, usize); 7] = [(0, 13), (18, 32), (37, 51), (56, 70), (75, 89), (94, 108), (113, 126)];
    for (a, b) in rows {
        for q in a..b {
            e.insert((q, q + 1));
        }
    }
    let verticals: [(usize, usize, usize); 24] = [
        (0, 14, 18),
        (4, 15, 22),
        (8, 16, 26),
        (12, 17, 30),
        (20, 33, 39),
        (24, 34, 43),
        (28, 35, 47),
        (32, 36, 51),
        (37, 52, 56),
        (41, 53, 60),
        (45, 54, 64),
        (49, 55, 68),
        (58, 71, 77),
        (62, 72, 81),
        (66, 73, 85),
        (70, 74, 89),
        (75, 90, 94),
        (79, 91, 98),
        (83, 92, 102),
        (87, 93, 106),
        (96, 109, 114),
        (100, 110, 118),
        (104, 111, 122),
        (108, 112, 126),
    ];
    for (a, c, b) in verticals {
        e.insert((a.min(c), a.max(c)));
        e.insert((c.min(b), c.max(b)));
    }
    e
}

fn edge_set(map: &CouplingMap) -> BTreeSet<(usize, usize)> {
    map.edges().iter().map(|&(a, b)| (a.min(b), a.max(b))).collect()
}

#[test]
fn eagle_matches_published_coupling() {
    let map = generate_heavy_hex_127();
    assert_eq!(map.n(), 127);
    assert_eq!(edge_set(&map), eagle_edges());
    assert_eq!(map.edges().len(), 144);
    let connectors: BTreeSet<usize> = map.connectors().iter().map(|q| q.0).collect();
    assert_eq!(connectors.len(), 24);
    for c in &connectors {
        assert_eq!(map.degree(QubitId(*c)), 2);
    }
}

#[test]
fn degrees_are_heavy_hex() {
    for layout in [HeavyHexLayout::EAGLE, HeavyHexLayout::OSPREY] {
        let map = generate_heavy_hex(layout).unwrap();
        let mut hist = [0usize; 4];
        for q in 0..map.n() {
            hist[map.degree(QubitId(q))] += 1;
        }
        assert_eq!(hist[0], 0);
        assert!(hist[3] > 0 && hist[2] > hist[3]);
    }
    assert_eq!(generate_heavy_hex(HeavyHexLayout::OSPREY).unwrap().n(), 433);
}

fn floyd_warshall(map: &CouplingMap) -> Vec<Vec<usize>> {
    let n = map.n();
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for &(a, b) in map.edges() {
        d[a][b] = 1;
        d[b][a] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

#[test]
fn hop_distance_matches_floyd_warshall() {
    let map = generate_heavy_hex_127();
    let d = floyd_warshall(&map);
    for a in 0..map.n() {
        for b in 0..map.n() {
            assert_eq!(map.hop_distance(QubitId(a), QubitId(b)), d[a][b], "{a} -> {b}");
        }
    }
}

#[test]
fn interior_connectors_have_full_neighborhoods() {
    let map = generate_heavy_hex_127();
    let interior = map.interior_connectors();
    assert_eq!(interior.len(), 18);
    for c in &interior {
        let nb = hammer_neighborhood(&map, *c).unwrap();
        for (i, d) in nb.direct.iter().enumerate() {
            assert!(map.is_adjacent(*c, *d));
            for f in &nb.flanks[i] {
                assert!(map.is_adjacent(*d, *f));
                assert_eq!(map.hop_distance(*c, *f), 2);
            }
        }
    }
    let nb = hammer_neighborhood(&map, QubitId(54)).unwrap();
    assert_eq!(nb.direct, [QubitId(45), QubitId(64)]);
    assert_eq!(nb.flanks, [vec![QubitId(44), QubitId(46)], vec![QubitId(63), QubitId(65)]]);
}

#[test]
fn json_roundtrip_keeps_connectors() {
    let map = generate_heavy_hex_127();
    let back = CouplingMap::from_json(&map.to_json()).unwrap();
    assert_eq!(back, map);
    assert_eq!(back.interior_connectors(), map.interior_connectors());
}
