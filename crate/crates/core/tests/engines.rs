use voronoi_perc::connectivity::{event_graph, evaluate, Engine, EventKind, EventSpec};
use voronoi_perc::estimators::{estimate_event, event_window};
use voronoi_perc::point_process::sample_configuration;

#[test]
fn raster_agrees_with_delaunay_on_most_configurations() {
    let kind = EventKind::BoxCrossing { n: 4.0 };
    let window = event_window(2, &kind).unwrap();
    let exact = EventSpec::new(kind.clone(), Engine::Delaunay2d);
    let raster = EventSpec::new(kind, Engine::Raster { h: 0.05 });
    let mut agree = 0;
    for s in 0..60 {
        let c = sample_configuration(&window, 0.5, s).unwrap();
        agree += usize::from(evaluate(&c, &exact).unwrap() == evaluate(&c, &raster).unwrap());
    }
    assert!(agree >= 57, "{agree} of 60");
}

#[test]
fn black_and_white_crossings_are_exclusive_on_the_raster() {
    let n = 4.0;
    let window = event_window(2, &EventKind::BoxCrossing { n }).unwrap();
    let b = EventSpec::new(EventKind::BoxCrossing { n }, Engine::Raster { h: 0.1 });
    let w = EventSpec::new(EventKind::WhiteCrossing { n }, Engine::Raster { h: 0.1 });
    let mut neither = 0;
    for s in 0..80 {
        let c = sample_configuration(&window, 0.5, 100 + s).unwrap();
        let (x, y) = (evaluate(&c, &b).unwrap(), evaluate(&c, &w).unwrap());
        assert!(!(x && y), "seed {s}: both crossings");
        neither += usize::from(!x && !y);
    }
    assert!(neither <= 2, "{neither} configurations without either crossing");
}

#[test]
fn delaunay_crossings_are_exactly_dual() {
    let n = 5.0;
    let window = event_window(2, &EventKind::BoxCrossing { n }).unwrap();
    let b = EventSpec::new(EventKind::BoxCrossing { n }, Engine::Delaunay2d);
    let w = EventSpec::new(EventKind::WhiteCrossing { n }, Engine::Delaunay2d);
    for s in 0..80 {
        let c = sample_configuration(&window, 0.5, 200 + s).unwrap();
        assert_ne!(evaluate(&c, &b).unwrap(), evaluate(&c, &w).unwrap(), "seed {s}");
    }
}

#[test]
fn events_are_monotone_in_p_on_both_engines() {
    for engine in [Engine::Delaunay2d, Engine::Raster { h: 0.2 }] {
        let spec = EventSpec::new(EventKind::OriginToSphere { n: 3.0 }, engine);
        let window = event_window(2, &spec.kind).unwrap();
        for s in 0..20 {
            let c = sample_configuration(&window, 0.5, s).unwrap();
            let g = event_graph(&c, &spec).unwrap();
            let vals: Vec<bool> = (0..=20).map(|i| g.holds(&c.colors_at(i as f64 / 20.0))).collect();
            assert!(vals.windows(2).all(|w| !w[0] || w[1]), "{engine:?} seed {s}");
        }
    }
}

#[test]
fn estimates_do_not_depend_on_the_thread_count() {
    let spec = EventSpec::new(EventKind::OriginToSphere { n: 3.0 }, Engine::Delaunay2d);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| estimate_event(2, 0.5, &spec, 64, 77).unwrap())
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.mean.to_bits(), b.mean.to_bits());
    assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
}
