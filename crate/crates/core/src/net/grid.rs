use super::{ApproachRecord, BoundaryRecord, IntersectionId, IntersectionRecord, NetError, RoadNetFile, RoadNetwork, Side};

/// Rectangular grid, row 1 on the north edge and column 1 on the west edge.
/// North-south links are `ns_length` meters, east-west links `ew_length`.
/// Every perimeter arm gets an entry and an exit boundary approach of the
/// same length as the links running in that direction.
pub fn make_grid(
    rows: usize,
    cols: usize,
    ns_length: f64,
    ew_length: f64,
    lanes_per_approach: usize,
) -> Result<RoadNetwork, NetError> {
    if rows == 0 || cols == 0 || lanes_per_approach == 0 {
        return Err(NetError::NonPositiveDimension {
            rows,
            cols,
            lanes: lanes_per_approach,
        });
    }
    grid_subset(rows, cols, |_, _| true, ns_length, ew_length, lanes_per_approach)
}

/// Plus-shaped network of five intersections: center `2-2` with leaves
/// `1-2` (N), `2-3` (E), `3-2` (S) and `2-1` (W). The leaves carry boundary
/// arms on their three outer sides.
pub fn make_cross(arm_length: f64, lanes_per_approach: usize) -> Result<RoadNetwork, NetError> {
    if lanes_per_approach == 0 {
        return Err(NetError::NonPositiveDimension {
            rows: 3,
            cols: 3,
            lanes: 0,
        });
    }
    grid_subset(
        3,
        3,
        |r, c| r == 2 || c == 2,
        arm_length,
        arm_length,
        lanes_per_approach,
    )
}

fn grid_subset(
    rows: usize,
    cols: usize,
    keep: impl Fn(usize, usize) -> bool,
    ns_length: f64,
    ew_length: f64,
    lanes: usize,
) -> Result<RoadNetwork, NetError> {
    let cell = |r: usize, c: usize| -> Option<String> {
        (r >= 1 && c >= 1 && r <= rows && c <= cols && keep(r, c)).then(|| IntersectionId::grid(r, c).to_string())
    };
    let mut intersections = Vec::new();
    let mut approaches = Vec::new();
    let mut boundary = Vec::new();
    for r in 1..=rows {
        for c in 1..=cols {
            let Some(id) = cell(r, c) else { continue };
            let around = [
                (Side::N, cell(r - 1, c), ns_length),
                (Side::E, cell(r, c + 1), ew_length),
                (Side::S, cell(r + 1, c), ns_length),
                (Side::W, cell(r, c.wrapping_sub(1)), ew_length),
            ];
            let mut rec = IntersectionRecord::isolated(id.clone());
            for (side, neighbor, length_m) in around {
                match neighbor {
                    Some(n) => {
                        approaches.push(ApproachRecord {
                            from: id.clone(),
                            to: n.clone(),
                            length_m,
                            lanes,
                        });
                        match side {
                            Side::N => rec.north = Some(n),
                            Side::E => rec.east = Some(n),
                            Side::S => rec.south = Some(n),
                            Side::W => rec.west = Some(n),
                        }
                    }
                    None => boundary.push(BoundaryRecord {
                        intersection: id.clone(),
                        side,
                        length_m,
                        lanes,
                        entry: true,
                        exit: true,
                    }),
                }
            }
            intersections.push(rec);
        }
    }
    RoadNetwork::from_file(&RoadNetFile {
        intersections,
        approaches,
        boundary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_intersection_has_four_boundary_arms() {
        let net = make_grid(1, 1, 300.0, 300.0, 3).unwrap();
        assert_eq!(net.len(), 1);
        assert_eq!(net.degree(0), 0);
        assert_eq!(net.entry_arms().len(), 4);
        assert_eq!(net.entering_lanes(0).len(), 12);
    }

    #[test]
    fn paper_scale_grids() {
        let hz = make_grid(4, 4, 600.0, 600.0, 3).unwrap();
        assert_eq!(hz.len(), 16);
        let mh = make_grid(16, 3, 100.0, 350.0, 3).unwrap();
        assert_eq!(mh.len(), 48);
        let v = mh.index_of(&"2-2".into()).unwrap();
        let north = mh.incoming(v, Side::N).unwrap();
        assert_eq!(mh.approach(north).length_m, 100.0);
        let east = mh.incoming(v, Side::E).unwrap();
        assert_eq!(mh.approach(east).length_m, 350.0);
    }

    #[test]
    fn zero_dimension_is_rejected() {
        assert!(matches!(
            make_grid(0, 3, 1.0, 1.0, 1),
            Err(NetError::NonPositiveDimension { .. })
        ));
        assert!(make_grid(2, 2, 1.0, 1.0, 0).is_err());
    }

    #[test]
    fn cross_is_a_star() {
        let net = make_cross(300.0, 3).unwrap();
        assert_eq!(net.len(), 5);
        let c = net.index_of(&"2-2".into()).unwrap();
        assert_eq!(net.degree(c), 4);
        for v in 0..net.len() {
            assert_eq!(net.entering_lanes(v).len(), 12);
            if v != c {
                assert_eq!(net.degree(v), 1);
            }
        }
    }

    proptest! {
        #[test]
        fn grid_degrees_and_slot_symmetry(rows in 1usize..7, cols in 1usize..7) {
            let net = make_grid(rows, cols, 100.0, 120.0, 2).unwrap();
            prop_assert_eq!(net.len(), rows * cols);
            for r in 1..=rows {
                for c in 1..=cols {
                    let v = net.index_of(&IntersectionId::grid(r, c)).unwrap();
                    let on_row_edge = r == 1 || r == rows;
                    let on_col_edge = c == 1 || c == cols;
                    let expected = [r > 1, r < rows, c > 1, c < cols].iter().filter(|b| **b).count();
                    prop_assert_eq!(net.degree(v), expected);
                    if rows > 1 && cols > 1 {
                        let want = match (on_row_edge, on_col_edge) {
                            (true, true) => 2,
                            (true, false) | (false, true) => 3,
                            (false, false) => 4,
                        };
                        prop_assert_eq!(net.degree(v), want);
                    }
                    for side in Side::ALL {
                        if let Some(u) = net.slot(v, side) {
                            prop_assert_eq!(net.slot(u, side.opposite()), Some(v));
                        }
                    }
                }
            }
        }

        #[test]
        fn hop_distance_is_a_metric(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
            let net = make_grid(rows, cols, 100.0, 100.0, 1).unwrap();
            let n = net.len();
            let pick = |k: u64| (seed.rotate_left(k as u32 * 13) % n as u64) as usize;
            let (a, b, c) = (pick(1), pick(2), pick(3));
            let da = net.hops_from(a);
            let db = net.hops_from(b);
            let dab = da[b].unwrap();
            prop_assert_eq!(Some(dab), db[a]);
            prop_assert!(da[c].unwrap() <= dab + db[c].unwrap());
            for u in 0..n {
                prop_assert_eq!(da[u] == Some(1), net.are_adjacent(a, u));
            }
        }
    }
}
