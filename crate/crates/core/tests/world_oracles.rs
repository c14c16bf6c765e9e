use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use taylorpi_core::terrain::{Heightmap, TerrainModel};
use taylorpi_core::world::{plane_moments, Moments};
use taylorpi_core::{ActionSet, MdpConfig, PlaneWorld, Rect, Region, State, TerrainWorld, World};

/// Rejection sampler written against the transition description only: the
/// waypoint is projected into the bounds, each axis is resampled until it lands
/// inside, and with probability `stay` the robot does not move at all.
struct Oracle {
    lo: (f64, f64),
    hi: (f64, f64),
    sd: f64,
}

impl Oracle {
    fn draw(
        &self,
        rng: &mut ChaCha8Rng,
        s: State<f64>,
        delta: (f64, f64),
        stay: f64,
    ) -> (f64, f64) {
        if stay > 0.0 && rng.random::<f64>() < stay {
            return (0.0, 0.0);
        }
        let wx = (s.x + delta.0).clamp(self.lo.0, self.hi.0);
        let wy = (s.y + delta.1).clamp(self.lo.1, self.hi.1);
        let axis = |rng: &mut ChaCha8Rng, w: f64, lo: f64, hi: f64| {
            if self.sd == 0.0 {
                return w;
            }
            let n = Normal::new(w, self.sd).unwrap();
            loop {
                let v = n.sample(rng);
                if (lo..=hi).contains(&v) {
                    return v;
                }
            }
        };
        let x = axis(rng, wx, self.lo.0, self.hi.0);
        let y = axis(rng, wy, self.lo.1, self.hi.1);
        (x - s.x, y - s.y)
    }

    fn moments(
        &self,
        seed: u64,
        s: State<f64>,
        delta: (f64, f64),
        stay: f64,
        n: usize,
    ) -> Moments<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut mx, mut my, mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let (dx, dy) = self.draw(&mut rng, s, delta, stay);
            mx += dx;
            my += dy;
            sxx += dx * dx;
            sxy += dx * dy;
            syy += dy * dy;
        }
        let k = n as f64;
        Moments {
            mu: State::new(mx / k, my / k),
            sigma: taylorpi_core::linalg::Mat2::new(sxx / k, sxy / k, sxy / k, syy / k),
        }
    }
}

fn assert_close(got: &Moments<f64>, want: &Moments<f64>, tol: f64, ctx: &str) {
    let d = [
        got.mu.x - want.mu.x,
        got.mu.y - want.mu.y,
        got.sigma.a - want.sigma.a,
        got.sigma.b - want.sigma.b,
        got.sigma.d - want.sigma.d,
    ];
    assert!(
        d.iter().all(|v| v.abs() < tol),
        "{ctx}: {got:?} vs {want:?}"
    );
}

fn incline(theta: f64) -> Heightmap<f64> {
    Heightmap::from_fn(11, 11, 1.0, |x, _| x * theta.tan()).unwrap()
}

#[test]
fn plane_moments_match_rejection_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let bounds = Rect::new(0.0, 0.0, 10.0, 10.0).unwrap();
    for case in 0..12 {
        let sd = rng.random_range(0.05..0.3);
        let mdp = MdpConfig::new(0.9, 1.0, -1.0, sd).unwrap();
        let world = PlaneWorld::new(
            bounds,
            vec![],
            Rect::new(9.5, 9.5, 10.0, 10.0).unwrap(),
            ActionSet::new(12, 0.5).unwrap(),
            mdp,
        )
        .unwrap();
        // Half the cases hug a wall so that truncation matters.
        let s = if case % 2 == 0 {
            State::new(rng.random_range(0.0..0.4), rng.random_range(1.0..9.0))
        } else {
            State::new(rng.random_range(1.0..9.0), rng.random_range(1.0..9.0))
        };
        let a = world.actions().action(rng.random_range(1..=12)).unwrap();
        let d = world.actions().displacement(a).unwrap();
        let oracle = Oracle {
            lo: (0.0, 0.0),
            hi: (10.0, 10.0),
            sd,
        };
        let mc = oracle.moments(case, s, (d.x, d.y), 0.0, 1_000_000);
        let got = world.moments(s, a).unwrap();
        assert_close(&got, &mc, 1e-3, &format!("plane case {case}"));
    }
}

#[test]
fn mixture_moments_match_rejection_sampling() {
    let theta = 0.25_f64;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..8 {
        let p = rng.random_range(0.05..0.95);
        let sd = rng.random_range(0.05..0.3);
        let terrain = TerrainModel::new(incline(theta), p / theta).unwrap();
        let world = TerrainWorld::new(
            terrain,
            vec![],
            Rect::new(9.0, 9.0, 10.0, 10.0).unwrap(),
            ActionSet::new(8, 0.7).unwrap(),
            MdpConfig::new(0.9, 1.0, 0.0, sd).unwrap(),
        )
        .unwrap();
        let s = State::new(rng.random_range(0.1..8.5), rng.random_range(0.1..8.5));
        let a = world.actions().action(rng.random_range(1..=8)).unwrap();
        let d = world.actions().displacement(a).unwrap();
        let stay = world.terrain().trap_probability(s);
        assert!((stay - p).abs() < 1e-12);
        let oracle = Oracle {
            lo: (0.0, 0.0),
            hi: (10.0, 10.0),
            sd,
        };
        let mc = oracle.moments(100 + case, s, (d.x, d.y), stay, 1_000_000);
        assert_close(
            &world.moments(s, a).unwrap(),
            &mc,
            1e-3,
            &format!("mixture case {case}"),
        );
    }
}

#[test]
fn worked_mixture_example() {
    let theta = 0.25_f64;
    let world = TerrainWorld::new(
        TerrainModel::new(incline(theta), 0.5 / theta).unwrap(),
        vec![],
        Rect::new(9.0, 9.0, 10.0, 10.0).unwrap(),
        ActionSet::new(4, 1.0).unwrap(),
        MdpConfig::new(0.9, 1.0, 0.0, 0.2).unwrap(),
    )
    .unwrap();
    let s = State::new(5.0, 5.0);
    let a = world.actions().action(4).unwrap();
    let want = Moments {
        mu: State::new(0.5, 0.0),
        sigma: taylorpi_core::linalg::Mat2::new(0.52, 0.0, 0.0, 0.02),
    };
    assert_close(&world.moments(s, a).unwrap(), &want, 1e-12, "closed form");
    let oracle = Oracle {
        lo: (0.0, 0.0),
        hi: (10.0, 10.0),
        sd: 0.2,
    };
    let mc = oracle.moments(1, s, (1.0, 0.0), 0.5, 1_000_000);
    assert_close(&mc, &want, 1e-3, "sampled");
}

#[test]
fn flat_terrain_matches_plane_exactly() {
    let hm = Heightmap::<f64>::from_fn(11, 11, 1.0, |_, _| 2.0).unwrap();
    let world = TerrainWorld::new(
        TerrainModel::new(hm, 3.0).unwrap(),
        vec![],
        Rect::new(9.0, 9.0, 10.0, 10.0).unwrap(),
        ActionSet::new(12, 0.5).unwrap(),
        MdpConfig::new(0.9, 1.0, 0.0, 0.2).unwrap(),
    )
    .unwrap();
    for a in world.actions().iter() {
        let s = State::new(4.2, 3.3);
        let plane = plane_moments(world.workspace(), world.actions(), world.mdp(), s, a).unwrap();
        assert_eq!(world.moments(s, a).unwrap(), plane);
        let d = world.actions().displacement(a).unwrap();
        assert!((plane.mu - d).norm() < 1e-15);
        assert!((plane.sigma.a - (0.04 + d.x * d.x)).abs() < 1e-15);
    }
}

#[test]
fn expected_reward_matches_monte_carlo_fraction() {
    let world = PlaneWorld::<f64>::benchmark();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let oracle = Oracle {
        lo: (0.0, 0.0),
        hi: (10.0, 10.0),
        sd: 0.2,
    };
    let mut tested = 0;
    while tested < 10 {
        let s = State::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0));
        if world.classify(s) != Region::Free {
            continue;
        }
        let a = world.actions().action(rng.random_range(1..=12)).unwrap();
        let d = world.actions().displacement(a).unwrap();
        let n = 200_000;
        let mut total = 0.0;
        let mut r = ChaCha8Rng::seed_from_u64(tested);
        for _ in 0..n {
            let (dx, dy) = oracle.draw(&mut r, s, (d.x, d.y), 0.0);
            total += world.arrival_reward(State::new(s.x + dx, s.y + dy));
        }
        let mc = total / n as f64;
        let exact = world.expected_reward(s, a).unwrap();
        assert!((-1.0..=1.0).contains(&exact));
        // Bernoulli-type estimator: four standard errors of the worst case.
        assert!(
            (exact - mc).abs() < 4.0 * (1.0 / n as f64).sqrt(),
            "{s:?} {a:?}: {exact} vs {mc}"
        );
        tested += 1;
    }
}

#[test]
fn aiming_into_an_obstacle_costs_nearly_the_full_penalty() {
    let world = PlaneWorld::<f64>::benchmark();
    // Obstacle [6,7] x [2,6]; the waypoint (6.49, 4.0) is inside it.
    let s = State::new(5.99, 4.0);
    let a = world.actions().action(12).unwrap();
    let r = world.expected_reward(s, a).unwrap();
    assert!(r > -1.0 && r < -0.95, "{r}");
}
