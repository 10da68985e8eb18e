use ivgff::harmonic::{green_diag_killed, probe_density, standard_probe, GreensTable};
use ivgff::solver::Backend;
use ivgff::{Error, RealField64, SquareDomain, SubDomain, Topology, Vertex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn v(x: usize, y: usize) -> Vertex {
    Vertex::new(x, y)
}

fn table(l: usize) -> GreensTable<f64> {
    GreensTable::new(&SquareDomain::zero_boundary(l).unwrap()).unwrap()
}

#[test]
fn single_interior_site() {
    let g = table(3);
    assert!((g.get(v(1, 1), v(1, 1)).unwrap() - 0.25).abs() < 1e-15);
    for b in g.domain().boundary() {
        assert_eq!(g.get(b, v(1, 1)).unwrap(), 0.0);
        assert_eq!(g.get(v(1, 1), b).unwrap(), 0.0);
    }
}

#[test]
fn green_columns_solve_the_laplacian() {
    let l = 9;
    let g = table(l);
    g.fill().unwrap();
    let d = g.domain().clone();
    for c in d.interior() {
        let col = g.column(c).unwrap();
        let lap = d.laplacian(col);
        let hm = g.harmonic_measure(c).unwrap();
        for u in d.vertices() {
            let want = if u == c {
                -1.0
            } else if d.is_boundary(u) {
                hm[u]
            } else {
                0.0
            };
            assert!((lap[u] - want).abs() < 1e-10);
        }
        for u in d.vertices() {
            assert!(col[u] >= 0.0);
            assert!((g.get(u, c).unwrap() - g.get(c, u).unwrap()).abs() < 1e-12);
        }
    }
}

#[test]
fn direct_and_iterative_solvers_agree() {
    let d = SquareDomain::zero_boundary(15).unwrap();
    let killed: Vec<bool> = (0..d.len()).map(|i| d.is_boundary_index(i)).collect();
    let a = GreensTable::<f64>::killed_on(&d, killed.clone(), Backend::BandedCholesky).unwrap();
    let b = GreensTable::<f64>::killed_on(&d, killed, Backend::ConjugateGradient).unwrap();
    for c in [v(7, 7), v(1, 1), v(3, 10)] {
        let diff = a.column(c).unwrap().sub(b.column(c).unwrap()).max_abs();
        assert!(diff < 1e-11, "{diff}");
    }
}

#[test]
fn single_precision_table() {
    let g = GreensTable::<f32>::new(&SquareDomain::zero_boundary(3).unwrap()).unwrap();
    assert!((g.get(v(1, 1), v(1, 1)).unwrap() - 0.25).abs() < 1e-6);
}

#[test]
fn random_walk_occupation_matches_green() {
    // discrete-time walk from the center: mean visits = 4 G(j, j)
    let g = table(5);
    let exact = g.get(v(2, 2), v(2, 2)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 200_000;
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..n {
        let (mut x, mut y) = (2i32, 2i32);
        let mut visits = 0.0;
        while x > 0 && y > 0 && x < 4 && y < 4 {
            if (x, y) == (2, 2) {
                visits += 1.0;
            }
            match rng.gen_range(0..4) {
                0 => x -= 1,
                1 => x += 1,
                2 => y -= 1,
                _ => y += 1,
            }
        }
        sum += visits;
        sumsq += visits * visits;
    }
    let mean = sum / n as f64;
    let se = ((sumsq / n as f64 - mean * mean) / n as f64).sqrt();
    assert!((mean - 4.0 * exact).abs() < 3.0 * se, "mean {mean} vs {} (se {se})", 4.0 * exact);
}

#[test]
fn harmonic_measure_properties() {
    let g = table(3);
    let hm = g.harmonic_measure(v(1, 1)).unwrap();
    for m in [v(0, 1), v(1, 0), v(2, 1), v(1, 2)] {
        assert!((hm[m] - 0.25).abs() < 1e-15);
    }
    for c in [v(0, 0), v(2, 0), v(0, 2), v(2, 2)] {
        assert_eq!(hm[c], 0.0);
    }
    assert!(matches!(g.harmonic_measure(v(0, 1)), Err(Error::InvalidArgument(_))));

    let g = table(17);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let l = v(rng.gen_range(1..16), rng.gen_range(1..16));
        let hm = g.harmonic_measure(l).unwrap();
        assert!((hm.sum() - 1.0).abs() < 1e-10);
        assert!(hm.values.iter().all(|&x| x >= 0.0));
    }

    let g = table(5);
    let hm = g.harmonic_measure(v(2, 2)).unwrap();
    let maps: [fn(Vertex) -> Vertex; 8] = [
        |u| u,
        |u| v(4 - u.x, u.y),
        |u| v(u.x, 4 - u.y),
        |u| v(4 - u.x, 4 - u.y),
        |u| v(u.y, u.x),
        |u| v(4 - u.y, u.x),
        |u| v(u.y, 4 - u.x),
        |u| v(4 - u.y, 4 - u.x),
    ];
    for m in maps {
        for u in g.domain().vertices() {
            assert!((hm[u] - hm[m(u)]).abs() < 1e-14);
        }
    }
}

#[test]
fn harmonic_extension_matches_measure_sum() {
    let l = 6;
    let g = table(l);
    let d = g.domain().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = RealField64::from_fn(l, |u| if d.is_boundary(u) { rng.gen_range(-3..=3) as f64 } else { 0.0 });
    let ext = g.harmonic_extension(&h).unwrap();
    for u in d.vertices() {
        let want = if d.is_boundary(u) {
            h[u]
        } else {
            let hm = g.harmonic_measure(u).unwrap();
            hm.dot(&h)
        };
        assert!((ext[u] - want).abs() < 1e-12);
    }
}

#[test]
fn harmonic_extension_examples() {
    let g = table(11);
    let d = g.domain().clone();
    let c = g.harmonic_extension(&RealField64::constant(11, 3.5)).unwrap();
    assert!(c.values.iter().all(|&x| (x - 3.5).abs() < 1e-12));
    let h = RealField64::from_fn(11, |u| u.x as f64);
    let ext = g.harmonic_extension(&h).unwrap();
    assert!(ext.sub(&h).max_abs() < 1e-10);

    let g5 = table(5);
    let d5 = g5.domain().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = RealField64::from_fn(5, |u| if d5.is_boundary(u) { rng.gen_range(-9..=9) as f64 } else { 0.0 });
    let ext = g5.harmonic_extension(&h).unwrap();
    let lap = d5.laplacian(&ext);
    assert!(d5.interior().iter().all(|&u| lap[u].abs() < 1e-10));
    let _ = d;
}

#[test]
fn inverse_laplacian_examples() {
    let g = table(5);
    let f = g.dual_basis(v(2, 2)).unwrap();
    let sigma = g.inverse_laplacian(&f).unwrap();
    assert!(sigma.sub(g.column(v(2, 2)).unwrap()).max_abs() < 1e-12);
    let zero = g.inverse_laplacian(&RealField64::zeros(5)).unwrap();
    assert_eq!(zero.max_abs(), 0.0);
    assert!(matches!(
        g.inverse_laplacian(&RealField64::delta(5, v(2, 2))),
        Err(Error::NotOrthogonal { .. })
    ));
    // -Δσ recovers f off the boundary
    let lap = g.domain().laplacian(&sigma);
    for u in g.domain().interior() {
        assert!((lap[u] + f[u]).abs() < 1e-12);
    }
}

#[test]
fn probe_density_properties() {
    let p = standard_probe::<f64>(11, v(5, 5), 11).unwrap();
    assert_eq!(p.inner.side, 5);
    assert!(p.field.sum().abs() < 1e-12);
    let inner_table = GreensTable::<f64>::for_subdomain(&p.inner).unwrap();
    let sigma = inner_table.inverse_laplacian(&p.local).unwrap();
    let diag = GreensTable::<f64>::for_subdomain(&p.inner)
        .unwrap()
        .get(p.inner.to_local(p.center), p.inner.to_local(p.center))
        .unwrap();
    assert!((sigma.dot(&p.local) - diag).abs() < 1e-10);

    let outer = SubDomain::centered(v(5, 5), 11).unwrap();
    let wrong = SubDomain::centered(v(5, 5), 3).unwrap();
    assert!(matches!(probe_density::<f64>(11, outer, wrong, v(5, 5)), Err(Error::InvalidGeometry(_))));
    assert!(matches!(standard_probe::<f64>(9, v(4, 4), 9), Err(Error::InvalidGeometry(_))));
    assert!(matches!(standard_probe::<f64>(11, v(6, 6), 11), Err(Error::InvalidGeometry(_))));
}

#[test]
fn killed_green_diagonal() {
    let d = SquareDomain::new(8, Topology::FreePinned(v(0, 0))).unwrap();
    let j = v(4, 4);
    let ring = [v(3, 4), v(5, 4), v(4, 3), v(4, 5)];
    assert!((green_diag_killed::<f64>(&d, &ring, j).unwrap() - 0.25).abs() < 1e-14);
    let t = SquareDomain::new(4, Topology::PeriodicPinned(v(0, 0))).unwrap();
    let val = green_diag_killed::<f64>(&t, &[v(2, 2)], v(0, 0)).unwrap();
    assert!(val.is_finite() && val > 0.0);
    assert!(matches!(green_diag_killed::<f64>(&t, &[v(0, 0)], v(0, 0)), Err(Error::InvalidArgument(_))));

    let mut set = vec![v(0, 0)];
    let mut last = green_diag_killed::<f64>(&d, &set, j).unwrap();
    for u in [v(7, 7), v(4, 7), v(1, 4), v(4, 2), v(5, 4)] {
        set.push(u);
        let next = green_diag_killed::<f64>(&d, &set, j).unwrap();
        assert!(next <= last + 1e-12);
        last = next;
    }
}

#[test]
fn csv_export() {
    let g = table(3);
    let mut buf = Vec::new();
    g.write_csv(&[v(1, 1)], &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("jx,jy,lx,ly,value"));
    assert_eq!(text.lines().count(), 10);
    assert!(text.contains("1,1,1,1,2.5000000000000000e-1"));
}
