use proptest::prelude::*;

use obstacle_monge::kantorovich::{cost_matrix, solve_exact};
use obstacle_monge::{ConvexObstacle, DiscreteMeasure, Point};

fn disk() -> ConvexObstacle {
    ConvexObstacle::disk(Point::new(0.5, -0.25), 1.0).unwrap()
}

fn hexagon() -> ConvexObstacle {
    let vs = (0..6)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / 6.0 + 0.2;
            Point::new(1.2 * a.cos(), 0.8 * a.sin())
        })
        .collect();
    ConvexObstacle::polygon(vs).unwrap()
}

fn obstacles() -> impl Strategy<Value = ConvexObstacle> {
    prop_oneof![Just(disk()), Just(hexagon())]
}

fn point() -> impl Strategy<Value = Point> {
    (-4.0..4.0f64, -4.0..4.0f64).prop_map(|(x, y)| Point::new(x, y))
}

fn admissible(obs: &ConvexObstacle, p: Point) -> bool {
    obs.check_admissible(p).is_ok()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn symmetric_and_above_euclidean(obs in obstacles(), x in point(), y in point()) {
        prop_assume!(admissible(&obs, x) && admissible(&obs, y));
        let d = obs.geodesic_length(x, y).unwrap();
        prop_assert_eq!(d, obs.geodesic_length(y, x).unwrap());
        prop_assert!(d >= x.dist(y) - 1e-12);
    }

    #[test]
    fn triangle_inequality(obs in obstacles(), x in point(), y in point(), z in point()) {
        prop_assume!(admissible(&obs, x) && admissible(&obs, y) && admissible(&obs, z));
        let d = |a, b| obs.geodesic_length(a, b).unwrap();
        prop_assert!(d(x, z) <= d(x, y) + d(y, z) + 1e-9);
    }

    #[test]
    fn path_is_consistent_with_length(obs in obstacles(), x in point(), y in point(), s in 0.0..1.0f64) {
        prop_assume!(admissible(&obs, x) && admissible(&obs, y));
        let path = obs.geodesic(x, y).unwrap();
        let len = path.total_length();
        prop_assert!(path.is_connected(obs.tolerance()));
        let p = path.point_at(s * len).unwrap();
        prop_assert!(obs.signed_distance(p) >= -1e-9);
        prop_assert!((obs.geodesic_length(x, p).unwrap() - s * len).abs() <= 1e-9);
        prop_assert!((obs.geodesic_length(p, y).unwrap() - (1.0 - s) * len).abs() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn extended_potential_is_one_lipschitz(
        obs in obstacles(),
        src in prop::collection::vec(point(), 6),
        dst in prop::collection::vec(point(), 6),
        probes in prop::collection::vec((point(), point()), 20),
    ) {
        prop_assume!(src.iter().chain(&dst).all(|&p| admissible(&obs, p)));
        let mu = DiscreteMeasure::uniform(src).unwrap();
        let nu = DiscreteMeasure::uniform(dst).unwrap();
        let cost = cost_matrix(&mu, &nu, &obs).unwrap();
        let (_, pot) = solve_exact(&mu, &nu, &cost).unwrap();
        for (p, q) in probes {
            if admissible(&obs, p) && admissible(&obs, q) {
                let du = pot.extend(&obs, &nu, p) - pot.extend(&obs, &nu, q);
                prop_assert!(du.abs() <= obs.geodesic_length(p, q).unwrap() + 1e-9);
            }
        }
    }
}
