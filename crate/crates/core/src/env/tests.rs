use super::*;

fn cfg(task: Task) -> EnvConfig {
    EnvConfig::new(task, 42)
}

fn zero_action(task: Task) -> Vec<f64> {
    vec![0.0; task.action_dim()]
}

fn finger_forces_zero(touch: &[f64; TOUCH_DIM]) -> bool {
    touch[FORCE_RANGE].iter().all(|&v| v == 0.0)
}

#[test]
fn task_ids_round_trip() {
    for t in Task::ALL {
        assert_eq!(t.name().parse::<Task>().unwrap(), t);
    }
    assert!(matches!("stacking".parse::<Task>(), Err(EnvError::UnknownTask(_))));
}

#[test]
fn pushing_layout_distance_and_angle() {
    let n = 1000;
    let bins = 8;
    let mut counts = vec![0usize; bins];
    for seed in 0..n {
        let (s, _) = reset(&cfg(Task::Pushing), seed);
        let d = s.body.position - s.goal.unwrap();
        let dist = d.length();
        assert!((0.10..=0.20).contains(&dist), "seed {seed}: {dist}");
        let theta = d.y.atan2(d.x).rem_euclid(std::f64::consts::TAU);
        counts[((theta / std::f64::consts::TAU * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let expected = n as f64 / bins as f64;
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    // 7 degrees of freedom, p = 0.01.
    assert!(chi2 < 18.475, "chi2 = {chi2}, counts {counts:?}");
}

#[test]
fn reset_is_deterministic() {
    for t in Task::ALL {
        let (a, oa) = reset(&cfg(t), 9);
        let (b, ob) = reset(&cfg(t), 9);
        assert_eq!(a, b);
        assert_eq!(oa, ob);
        let (c, _) = reset(&cfg(t), 10);
        assert_ne!(a, c);
    }
}

#[test]
fn trajectories_are_deterministic() {
    for t in Task::ALL {
        let run = || {
            let (mut s, _) = reset(&cfg(t), 3);
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let mut out = Vec::new();
            while !s.done {
                let a: Vec<f64> = (0..t.action_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let o = step(&mut s, &a).unwrap();
                out.push((o.observation.touch, o.reward, s.body.position.x.to_bits()));
            }
            out
        };
        assert_eq!(run(), run());
    }
}

#[test]
fn action_validation() {
    let (mut s, _) = reset(&cfg(Task::Pushing), 0);
    assert!(matches!(
        step(&mut s, &[0.0; 5]),
        Err(EnvError::ActionDim { got: 5, expected: 4 })
    ));
    assert!(matches!(
        step(&mut s, &[0.0, f64::NAN, 0.0, 0.0]),
        Err(EnvError::NonFiniteAction { index: 1 })
    ));
    assert_eq!(s.step, 0);
}

#[test]
fn pushing_success_threshold_is_strict() {
    let (mut s, _) = reset(&cfg(Task::Pushing), 1);
    s.goal = Some(Vec2::ZERO);
    s.body.position = Vec2::new(0.07, 0.0);
    assert!(!is_success(Task::Pushing, &s));
    s.body.position = Vec2::new(0.0699, 0.0);
    assert!(is_success(Task::Pushing, &s));
}

#[test]
fn pushing_within_radius_rewards_and_ends() {
    let (mut s, _) = reset(&cfg(Task::Pushing), 2);
    s.body.position = s.goal.unwrap() + Vec2::new(0.05, 0.0);
    let o = step(&mut s, &zero_action(Task::Pushing)).unwrap();
    assert_eq!(o.reward, SUCCESS_REWARD);
    assert!(o.done && o.info.success);
    assert!(matches!(step(&mut s, &zero_action(Task::Pushing)), Err(EnvError::EpisodeOver)));
}

#[test]
fn opening_at_thirty_degrees() {
    let (mut s, _) = reset(&cfg(Task::Opening), 4);
    s.body.angle = DOOR_SUCCESS_ANGLE - 1e-9;
    assert!(!is_success(Task::Opening, &s));
    s.body.angle = 30f64.to_radians();
    assert!(is_success(Task::Opening, &s));
    let o = step(&mut s, &zero_action(Task::Opening)).unwrap();
    assert_eq!(o.reward, 25.0);
    assert!(o.done);
}

#[test]
fn pickup_height_predicate() {
    let (mut s, _) = reset(&cfg(Task::Pickup), 0);
    s.body.position.y = CUBE_SIDE / 2.0 + 0.051;
    assert!(is_success(Task::Pickup, &s));
    s.body.position.y = CUBE_SIDE / 2.0 + 0.049;
    assert!(!is_success(Task::Pickup, &s));
}

#[test]
fn playing_never_succeeds() {
    let (mut s, _) = reset(&cfg(Task::Playing), 0);
    assert!(!is_success(Task::Playing, &s));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    while !s.done {
        let a: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let o = step(&mut s, &a).unwrap();
        assert!(!o.info.success);
        assert_eq!(o.reward, 0.0);
    }
}

#[test]
fn zero_action_without_contact_is_inert() {
    for t in Task::ALL {
        let (mut s, _) = reset(&cfg(t), 6);
        let before = s.body.position;
        for _ in 0..20 {
            let o = step(&mut s, &zero_action(t)).unwrap();
            assert!(finger_forces_zero(&o.observation.touch), "{t}");
        }
        assert_eq!(s.body.position, before, "{t}");
    }
}

#[test]
fn episodes_end_within_horizon() {
    for t in Task::ALL {
        let mut c = cfg(t);
        c.horizon = 30;
        let (mut s, _) = reset(&c, 0);
        let mut n = 0;
        while !s.done {
            step(&mut s, &zero_action(t)).unwrap();
            n += 1;
        }
        assert!(n <= 30);
        assert!(s.step <= c.horizon);
    }
}

/// Top-down playing scene with the cube at the origin, no goal.
fn centred_cube() -> EnvState {
    let (mut s, _) = reset(&cfg(Task::Playing), 0);
    s.body.position = Vec2::ZERO;
    s.body.angle = 0.0;
    s.gripper = Gripper {
        position: Vec2::ZERO,
        yaw: 0.0,
        aperture: 1.0,
        grasping: false,
    };
    s
}

#[test]
fn pressing_into_a_wall_reports_applied_impulse() {
    let mut s = centred_cube();
    s.walls.push(HalfPlane {
        point: Vec2::new(0.0, CUBE_SIDE / 2.0),
        normal: Vec2::new(0.0, -1.0),
        friction: OBJECT_FRICTION,
    });
    // Fingers stacked along y so only the upper one touches.
    s.gripper.yaw = std::f64::consts::FRAC_PI_2;
    s.gripper.aperture = 0.0;
    s.gripper.position = Vec2::new(0.0, -CUBE_SIDE / 2.0 - 2.0 * FINGER_RADIUS - 0.015);
    let dt = PhysicsParams::top_down().dt;
    let mut pressed = 0;
    for _ in 0..10 {
        let o = step(&mut s, &[0.0, 1.0, 0.0, -1.0]).unwrap();
        let w = finger_wrenches(&s);
        for (i, wrench) in w.iter().enumerate() {
            let mut j = Vec2::ZERO;
            for c in &s.contacts {
                if c.with == Contactor::Finger(i) {
                    j += c.normal * c.normal_impulse + c.tangent() * c.tangent_impulse;
                }
            }
            let f = Vec2::new(wrench[0], wrench[1]);
            assert!((f.length() - j.length() / dt).abs() <= 1e-9);
            if j.length() > 0.0 {
                pressed += 1;
                // Pushing straight up: the reaction on the finger points down.
                assert!(f.y < 0.0 && f.x.abs() <= 1e-9 * f.length().max(1.0), "{f:?}");
            }
        }
        assert_eq!(&o.observation.touch[4..7], &w[0][..]);
    }
    assert!(pressed > 0);
}

#[test]
fn symmetric_squeeze_mirrors_forces() {
    let mut s = centred_cube();
    let mut squeezed = false;
    for _ in 0..6 {
        let o = step(&mut s, &[0.0, 0.0, 0.0, -1.0]).unwrap();
        let t = o.observation.touch;
        let (l, r) = (Vec2::new(t[4], t[5]), Vec2::new(t[7], t[8]));
        let scale = l.length().max(r.length());
        assert!((l.length() - r.length()).abs() <= 1e-9 + 1e-6 * scale, "{l:?} {r:?}");
        if l.length() > 1.0 {
            squeezed = true;
            assert!(l.x < 0.0 && r.x > 0.0);
        }
    }
    assert!(squeezed && s.gripper.grasping);
}

#[test]
fn render_is_deterministic_and_tracks_object() {
    let (s, _) = reset(&cfg(Task::Playing), 5);
    assert_eq!(render(&s), render(&s));
    let a = render(&s);
    let silhouette = a.count_level(render::level::OBJECT);
    assert!(silhouette > 0);
    let mut moved = s.clone();
    moved.body.position.x += 5.0 * 0.7 / 42.0;
    let b = render(&moved);
    assert!(a.count_diff(&b) >= silhouette);
}

#[test]
fn empty_table_is_uniform() {
    let (mut s, _) = reset(&cfg(Task::Playing), 0);
    s.body.parts.clear();
    s.gripper.position = Vec2::new(10.0, 10.0);
    let img = render(&s);
    assert_eq!(img.count_level(render::level::BACKGROUND), 42 * 42);
}

#[test]
fn pickup_object_falls_without_support() {
    let (mut s, _) = reset(&cfg(Task::Pickup), 0);
    s.body.position.y = 0.2;
    s.gripper.position = Vec2::new(0.3, 0.4);
    let mut prev = s.lift_height();
    let mut landed = false;
    for _ in 0..120 {
        step(&mut s, &zero_action(Task::Pickup)).unwrap();
        // Starting above the success height ends the episode; keep falling.
        s.done = false;
        let h = s.lift_height();
        let on_table = s.contacts.iter().any(|c| matches!(c.with, Contactor::Wall(_)) && c.normal_impulse > 0.0);
        if on_table {
            landed = true;
            break;
        }
        assert!(h < prev);
        prev = h;
    }
    assert!(landed);
}

fn adjacent_to_object(img: &Image) -> bool {
    let (w, h) = (img.width as i64, img.height as i64);
    for r in 0..h {
        for c in 0..w {
            if img.get(c as usize, r as usize) != render::level::FINGER {
                continue;
            }
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (rr, cc) = (r + dr, c + dc);
                    if (0..h).contains(&rr)
                        && (0..w).contains(&cc)
                        && img.get(cc as usize, rr as usize) == render::level::OBJECT
                    {
                        return true;
                    }
                }
            }
        }
    }
    false
}

#[test]
fn contact_implies_adjacent_silhouettes() {
    let mut touched = 0;
    for seed in 0..6 {
        let (mut s, _) = reset(&cfg(Task::Playing), seed);
        // Drive toward the cube, then wander.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        while !s.done {
            let d = s.body.position - s.gripper.position;
            let a = if rng.random_bool(0.6) {
                vec![(d.x * 100.0).clamp(-1.0, 1.0), (d.y * 100.0).clamp(-1.0, 1.0), 0.0, rng.random_range(-1.0..1.0)]
            } else {
                (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()
            };
            let o = step(&mut s, &a).unwrap();
            if !finger_forces_zero(&o.observation.touch) {
                touched += 1;
                assert!(adjacent_to_object(&o.observation.image), "seed {seed} step {}", s.step);
            }
        }
    }
    assert!(touched > 10, "only {touched} contact steps");
}

#[test]
fn observations_are_well_formed() {
    for t in Task::ALL {
        let (mut s, o) = reset(&cfg(t), 2);
        assert_eq!(o.image.pixels.len(), 42 * 42);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        while !s.done {
            let a: Vec<f64> = (0..t.action_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let o = step(&mut s, &a).unwrap();
            assert!(o.observation.touch.iter().all(|v| v.is_finite()));
            assert!((0.0..=1.0).contains(&s.gripper.aperture));
        }
    }
}

#[test]
fn scripted_pushing_succeeds() {
    let mut wins = 0;
    for seed in 0..10 {
        let (mut s, _) = reset(&cfg(Task::Pushing), seed);
        let mut reward = 0.0;
        while !s.done {
            let goal = s.goal.unwrap();
            let dir = (goal - s.body.position).normalized();
            let side = dir.perp();
            let behind = s.body.position - dir * (CUBE_SIDE / 2.0 + FINGER_RADIUS + 0.01);
            let rel = s.gripper.position - s.body.position;
            let d = if rel.dot(dir) > -0.03 {
                // On the wrong side: go around via a flank waypoint.
                let flank = if rel.dot(side) >= 0.0 { side } else { -side };
                s.body.position + flank * 0.08 - dir * 0.06 - s.gripper.position
            } else if (behind - s.gripper.position).length() > 0.01 {
                behind - s.gripper.position
            } else {
                dir * 0.01
            };
            let a = [(d.x * 100.0).clamp(-1.0, 1.0), (d.y * 100.0).clamp(-1.0, 1.0), 0.0, -1.0];
            reward += step(&mut s, &a).unwrap().reward;
        }
        if reward > 0.0 {
            wins += 1;
        } else {
            eprintln!("seed {seed}: {:?} goal {:?} step {} oob {}", s.body.position, s.goal, s.step, s.out_of_bounds());
        }
    }
    assert!(wins >= 8, "{wins}/10");
}

#[test]
fn scripted_pickup_succeeds() {
    let mut wins = 0;
    for seed in 0..10 {
        let (mut s, _) = reset(&cfg(Task::Pickup), seed);
        let mut reward = 0.0;
        while !s.done {
            let above = Vec2::new(s.body.position.x, CUBE_SIDE / 2.0);
            let d = above - s.gripper.position;
            let a = if d.length() > 0.003 && !s.gripper.grasping {
                [(d.x * 100.0).clamp(-1.0, 1.0), 0.0, (d.y * 100.0).clamp(-1.0, 1.0), 1.0]
            } else if !s.gripper.grasping {
                [0.0, 0.0, 0.0, -1.0]
            } else {
                [0.0, 0.0, 1.0, -1.0]
            };
            reward += step(&mut s, &a).unwrap().reward;
        }
        if reward > 0.0 {
            wins += 1;
        }
    }
    assert!(wins >= 8, "{wins}/10");
}

#[test]
fn scripted_opening_succeeds() {
    let mut wins = 0;
    for seed in 0..10 {
        let (mut s, _) = reset(&cfg(Task::Opening), seed);
        let hinge = s.hinge.unwrap();
        let mut reward = 0.0;
        while !s.done {
            // Push the panel near its free end, from the outside.
            let along = Vec2::from_polar(0.1, s.body.angle);
            let outward = Vec2::from_polar(1.0, s.body.angle).perp() * -1.0;
            let contact = hinge + along;
            let staging = contact + outward * 0.06;
            let rel = s.gripper.position - contact;
            let d = if rel.dot(outward) > 0.03 && (staging - s.gripper.position).length() > 0.01 && s.step < 40 {
                staging - s.gripper.position
            } else {
                -outward * 0.01
            };
            let a = [(d.x * 100.0).clamp(-1.0, 1.0), (d.y * 100.0).clamp(-1.0, 1.0), 0.0, -1.0, 0.0];
            reward += step(&mut s, &a).unwrap().reward;
        }
        if reward > 0.0 {
            wins += 1;
        }
    }
    assert!(wins >= 8, "{wins}/10");
}

#[test]
fn trace_csv_has_header_and_rows() {
    let (mut s, o) = reset(&cfg(Task::Pushing), 0);
    let mut rows = vec![TraceStep::capture(&s, &o.touch, 0.0, false)];
    for _ in 0..3 {
        let o = step(&mut s, &zero_action(Task::Pushing)).unwrap();
        rows.push(TraceStep::capture(&s, &o.observation.touch, o.reward, o.done));
    }
    let mut buf = Vec::new();
    write_trace_csv(&mut buf, &rows).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("step,object_x"));
    assert_eq!(lines[0].split(',').count(), 8 + TOUCH_DIM + 2);
    assert_eq!(read_trace_csv(text.as_bytes()).unwrap(), rows);
    assert!(matches!(read_trace_csv("step,x\n1,2\n".as_bytes()), Err(EnvError::Trace(_))));
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn kinetic_energy_never_grows_under_zero_action(
            seed in 0u64..1000, vx in -1.0f64..1.0, vy in -1.0f64..1.0, w in -10.0f64..10.0,
        ) {
            let (mut s, _) = reset(&cfg(Task::Playing), seed);
            s.body.velocity = Vec2::new(vx, vy);
            s.body.angular_velocity = w;
            let mut prev = s.body.kinetic_energy();
            while !s.done && s.step < 60 {
                step(&mut s, &zero_action(Task::Playing)).unwrap();
                let e = s.body.kinetic_energy();
                prop_assert!(e <= prev * (1.0 + 1e-12) + 1e-15, "{prev} -> {e}");
                prev = e;
            }
        }

        #[test]
        fn same_actions_same_trajectory(seed in 0u64..500, actions in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 4), 1..40)) {
            let go = || {
                let (mut s, _) = reset(&cfg(Task::Pushing), seed);
                for a in &actions {
                    if s.done { break; }
                    step(&mut s, a).unwrap();
                }
                s
            };
            prop_assert_eq!(go(), go());
        }
    }
}


#[test]
fn fingers_stay_in_view_at_the_workspace_corners() {
    for task in Task::ALL {
        let cam = task.camera();
        for (sx, sy) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
            let (mut s, _) = reset(&cfg(task), 0);
            let mut a = zero_action(task);
            a[0] = sx;
            a[if task.side_view() { 2 } else { 1 }] = sy;
            a[3] = 1.0;
            if task == Task::Opening {
                a[4] = 1.0;
            }
            for _ in 0..120 {
                let done = step(&mut s, &a).unwrap().done;
                for c in s.gripper.finger_centers() {
                    assert!(
                        c.x - FINGER_RADIUS >= cam.min.x
                            && c.x + FINGER_RADIUS <= cam.max.x
                            && c.y - FINGER_RADIUS >= cam.min.y
                            && c.y + FINGER_RADIUS <= cam.max.y,
                        "{task} finger at {c:?}"
                    );
                }
                if done {
                    break;
                }
            }
        }
    }
}

#[test]
fn shape_bank_objects_reach_playing_and_pushing() {
    for task in [Task::Playing, Task::Pushing] {
        for split in [ShapeSplit::Train, ShapeSplit::Eval] {
            let mut c = cfg(task);
            c.objects = ObjectSource::Bank { master_seed: 9, split };
            for seed in 0..20 {
                let (s, _) = reset(&c, seed);
                let idx = s.shape_index.expect("bank index");
                assert!(split.range().contains(&idx));
                let shape = bank_shape(9, idx);
                assert_eq!(s.body.mass, shape.mass);
                assert_eq!(s.body.parts.len(), 1);
                assert_eq!(s.body.parts[0].len(), shape.vertices.len());
            }
        }
        let (s, _) = reset(&cfg(task), 0);
        assert_eq!(s.shape_index, None);
    }
}
