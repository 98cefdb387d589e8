use macgame::dynamics::*;
use macgame::equilibrium::*;
use macgame::game::*;
use macgame::structure::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn main() {
    // ---- criterion 9: collinear 2x2, reach 1e-5, |dPhi| <= 1e-8 between limits
    let t0 = Instant::now();
    let mut distinct_limit_games = 0;
    for gs in 0..10u64 {
        let factor = 0.4 + 0.2 * gs as f64;
        let g = Game::random_collinear(2, 2, 9000 + gs, factor, GainDistribution::Exponential).unwrap();
        assert_eq!(degeneracy_index(&g, DEFAULT_RANK_TOL).index, 1);
        let mut limits: Vec<(PowerProfile, f64)> = vec![];
        for is in 0..4u64 {
            let init = g.random_interior_profile(100 * gs + is);
            let opts = IntegrateOptions { residual_tol: 1e-9, horizon: 1e4, ..IntegrateOptions::default() };
            let traj = integrate(&g, &init, &opts, None).unwrap();
            let reached = traj.kkt_residuals.iter().any(|&r| r <= 1e-5);
            if !reached { println!("C9 FAIL reach: game {gs} init {is} res {:.2e} reason {:?}", traj.kkt_residuals.last().unwrap(), traj.reason); }
            let phi = traj.potential_values.last().copied().unwrap();
            limits.push((traj.last_profile().clone(), phi));
        }
        let mut has_distinct = false;
        for i in 0..limits.len() { for j in i+1..limits.len() {
            let d = limits[i].0.max_norm_distance(&limits[j].0);
            let dphi = (limits[i].1 - limits[j].1).abs();
            if d > 1e-3 { has_distinct = true; }
            if dphi > 1e-8 { println!("C9 FAIL dPhi: game {gs} pair ({i},{j}) dist {d:.2e} dphi {dphi:.2e}"); }
        }}
        if has_distinct { distinct_limit_games += 1; }
    }
    println!("C9 done: {distinct_limit_games}/10 games with distinct limits, elapsed {:?}", t0.elapsed());

    // ---- criterion 10: restricted supports -> reduced equilibrium within 1e-3
    let t0 = Instant::now();
    for gs in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(11000 + gs);
        let k = rng.random_range(2..=3);
        let a = rng.random_range(2..=4);
        let g = Game::random(k, a, 11000 + gs, GainDistribution::Exponential).unwrap();
        // random proper supports
        let supports: Vec<Vec<usize>> = (0..k).map(|_| {
            let size = rng.random_range(1..=a);
            let mut nodes: Vec<usize> = (0..a).collect();
            for i in (1..nodes.len()).rev() { let j = rng.random_range(0..=i); nodes.swap(i, j); }
            let mut s: Vec<usize> = nodes.into_iter().take(size).collect();
            s.sort_unstable(); s
        }).collect();
        let reduced = reduced_game(&g, &supports).unwrap();
        let target = reduced.solve_potential_min(None, &SolveOptions::default());
        let init = reduced.random_interior_profile(500 + gs);
        let opts = IntegrateOptions { residual_tol: 1e-8, horizon: 1e5, ..IntegrateOptions::default() };
        let traj = integrate(&g, &init, &opts, None).unwrap();
        let d = traj.last_profile().max_norm_distance(&target.profile);
        println!("C10 game {gs}: K={k} A={a} reason {:?} dist {d:.3e} t_end {:.0}", traj.reason, traj.times.last().unwrap());
    }
    println!("C10 elapsed {:?}", t0.elapsed());
}
