//! Impulse-based planar rigid-body step: one dynamic body, kinematic disk
//! fingers and static half-planes, with speculative contacts, Coulomb
//! friction and Baumgarte position correction.

use serde::{Deserialize, Serialize};

use super::geometry::{area_moment_about_origin, polygon_distance, signed_area, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicsParams {
    pub dt: f64,
    pub gravity: Vec2,
    /// Linear damping (1/s); stands in for table friction in top-down scenes.
    pub linear_damping: f64,
    pub angular_damping: f64,
    pub iterations: usize,
    pub baumgarte: f64,
    pub slop: f64,
    /// Contacts are generated while the gap is below this distance.
    pub speculative_margin: f64,
}

impl PhysicsParams {
    pub fn top_down() -> Self {
        Self {
            dt: 1.0 / 60.0,
            gravity: Vec2::ZERO,
            linear_damping: 6.0,
            angular_damping: 6.0,
            iterations: 12,
            baumgarte: 0.2,
            slop: 5e-4,
            speculative_margin: 0.02,
        }
    }

    pub fn side_view() -> Self {
        Self {
            gravity: Vec2::new(0.0, -9.81),
            linear_damping: 0.0,
            angular_damping: 0.5,
            ..Self::top_down()
        }
    }
}

/// Rigid body made of convex parts. The reference point is the centre of
/// mass for free bodies and the hinge for pinned ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Body {
    pub position: Vec2,
    pub angle: f64,
    pub velocity: Vec2,
    pub angular_velocity: f64,
    pub mass: f64,
    pub inv_mass: f64,
    pub inv_inertia: f64,
    pub friction: f64,
    pub pinned: bool,
    /// Hinge range for pinned bodies.
    pub angle_limits: Option<(f64, f64)>,
    /// Counter-clockwise convex parts in the body frame.
    pub parts: Vec<Vec<Vec2>>,
}

impl Body {
    /// Free body; `parts` must already be centred on the centre of mass.
    pub fn free(parts: Vec<Vec<Vec2>>, mass: f64, friction: f64, position: Vec2, angle: f64) -> Self {
        let inertia = inertia_about_origin(&parts, mass);
        Self {
            position,
            angle,
            velocity: Vec2::ZERO,
            angular_velocity: 0.0,
            mass,
            inv_mass: 1.0 / mass,
            inv_inertia: 1.0 / inertia,
            friction,
            pinned: false,
            angle_limits: None,
            parts,
        }
    }

    /// Body rotating about `hinge` (the body-frame origin).
    pub fn hinged(
        parts: Vec<Vec<Vec2>>,
        mass: f64,
        friction: f64,
        hinge: Vec2,
        angle: f64,
        limits: (f64, f64),
    ) -> Self {
        let inertia = inertia_about_origin(&parts, mass);
        Self {
            position: hinge,
            angle,
            velocity: Vec2::ZERO,
            angular_velocity: 0.0,
            mass,
            inv_mass: 0.0,
            inv_inertia: 1.0 / inertia,
            friction,
            pinned: true,
            angle_limits: Some(limits),
            parts,
        }
    }

    pub fn world_parts(&self) -> Vec<Vec<Vec2>> {
        self.parts
            .iter()
            .map(|p| p.iter().map(|&v| self.to_world(v)).collect())
            .collect()
    }

    pub fn to_world(&self, local: Vec2) -> Vec2 {
        self.position + local.rotated(self.angle)
    }

    pub fn point_velocity(&self, p: Vec2) -> Vec2 {
        self.velocity + (p - self.position).perp() * self.angular_velocity
    }

    pub fn kinetic_energy(&self) -> f64 {
        let lin = if self.inv_mass > 0.0 {
            0.5 * self.mass * self.velocity.dot(self.velocity)
        } else {
            0.0
        };
        lin + 0.5 * self.angular_velocity * self.angular_velocity / self.inv_inertia
    }

    /// Lowest world-frame vertex height.
    pub fn min_y(&self) -> f64 {
        self.world_parts()
            .iter()
            .flatten()
            .map(|v| v.y)
            .fold(f64::INFINITY, f64::min)
    }

    fn apply_impulse(&mut self, impulse: Vec2, at: Vec2) {
        self.velocity += impulse * self.inv_mass;
        self.angular_velocity += self.inv_inertia * (at - self.position).cross(impulse);
    }
}

fn inertia_about_origin(parts: &[Vec<Vec2>], mass: f64) -> f64 {
    let area: f64 = parts.iter().map(|p| signed_area(p)).sum();
    let density = mass / area;
    parts
        .iter()
        .map(|p| area_moment_about_origin(p) * density)
        .sum()
}

/// Static half-plane `{ p : (p - point) . normal >= 0 }` is free space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfPlane {
    pub point: Vec2,
    pub normal: Vec2,
    pub friction: f64,
}

/// Disk moved kinematically by the gripper.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicDisk {
    pub center: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
    pub friction: f64,
    /// Lower bound on the accumulated normal impulse (grip force * dt).
    pub min_normal_impulse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Contactor {
    Finger(usize),
    Wall(usize),
}

/// Solved contact. `normal` points from the contactor into the body and
/// impulses are those applied to the body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactReport {
    pub with: Contactor,
    pub point: Vec2,
    pub normal: Vec2,
    pub separation: f64,
    pub normal_impulse: f64,
    pub tangent_impulse: f64,
}

impl ContactReport {
    pub fn tangent(&self) -> Vec2 {
        self.normal.perp()
    }

    /// Total impulse applied to the body.
    pub fn impulse(&self) -> Vec2 {
        self.normal * self.normal_impulse + self.tangent() * self.tangent_impulse
    }
}

struct Solving {
    report: ContactReport,
    other_velocity: Vec2,
    friction: f64,
    normal_mass: f64,
    tangent_mass: f64,
    target_normal_velocity: f64,
    min_normal_impulse: f64,
}

fn finger_contacts(parts: &[Vec<Vec2>], fingers: &[KinematicDisk], margin: f64) -> Vec<(usize, Vec2, Vec2, f64)> {
    let mut out = Vec::new();
    for (fi, f) in fingers.iter().enumerate() {
        for part in parts {
            let (d, q, n_out) = polygon_distance(part, f.center);
            let sep = d - f.radius;
            if sep < margin {
                // Normal from finger into body is the inward polygon normal.
                out.push((fi, q, -n_out, sep));
            }
        }
    }
    out
}

fn wall_contacts(parts: &[Vec<Vec2>], walls: &[HalfPlane], margin: f64) -> Vec<(usize, Vec2, Vec2, f64)> {
    let mut out = Vec::new();
    for (wi, w) in walls.iter().enumerate() {
        for part in parts {
            for &v in part {
                let sep = (v - w.point).dot(w.normal);
                if sep < margin {
                    out.push((wi, v, w.normal, sep));
                }
            }
        }
    }
    out
}

fn solve_normal(body: &mut Body, c: &mut Solving) {
    let p = c.report.point;
    let n = c.report.normal;
    let vn = (body.point_velocity(p) - c.other_velocity).dot(n);
    let old = c.report.normal_impulse;
    let new = (old - c.normal_mass * (vn - c.target_normal_velocity)).max(c.min_normal_impulse);
    c.report.normal_impulse = new;
    body.apply_impulse(n * (new - old), p);
}

fn solve_friction(body: &mut Body, c: &mut Solving) {
    let p = c.report.point;
    let t = c.report.normal.perp();
    let vt = (body.point_velocity(p) - c.other_velocity).dot(t);
    let limit = c.friction * c.report.normal_impulse;
    let old = c.report.tangent_impulse;
    let new = (old - c.tangent_mass * vt).clamp(-limit, limit);
    c.report.tangent_impulse = new;
    body.apply_impulse(t * (new - old), p);
}

/// Exact 2x2 LCP for two contacts sharing a normal, by enumerating the
/// four complementarity cases. Returns false when the pair is degenerate.
fn solve_block(body: &mut Body, a: &mut Solving, b: &mut Solving) -> bool {
    let n = a.report.normal;
    let (pa, pb) = (a.report.point, b.report.point);
    let rna = (pa - body.position).cross(n);
    let rnb = (pb - body.position).cross(n);
    let k11 = body.inv_mass + body.inv_inertia * rna * rna;
    let k22 = body.inv_mass + body.inv_inertia * rnb * rnb;
    let k12 = body.inv_mass + body.inv_inertia * rna * rnb;
    let det = k11 * k22 - k12 * k12;
    if det <= 1e-9 * k11 * k22 {
        return false;
    }
    let (xa, xb) = (a.report.normal_impulse, b.report.normal_impulse);
    let vn1 = (body.point_velocity(pa) - a.other_velocity).dot(n);
    let vn2 = (body.point_velocity(pb) - b.other_velocity).dot(n);
    let b1 = vn1 - a.target_normal_velocity - (k11 * xa + k12 * xb);
    let b2 = vn2 - b.target_normal_velocity - (k12 * xa + k22 * xb);
    let candidates = [
        (-(k22 * b1 - k12 * b2) / det, -(k11 * b2 - k12 * b1) / det),
        (-b1 / k11, 0.0),
        (0.0, -b2 / k22),
        (0.0, 0.0),
    ];
    let (x1, x2) = match candidates.into_iter().find(|&(x1, x2)| {
        let v1 = k11 * x1 + k12 * x2 + b1;
        let v2 = k12 * x1 + k22 * x2 + b2;
        x1 >= 0.0 && x2 >= 0.0 && (x1 > 0.0 || v1 >= 0.0) && (x2 > 0.0 || v2 >= 0.0)
    }) {
        Some(x) => x,
        None => (xa, xb),
    };
    a.report.normal_impulse = x1;
    b.report.normal_impulse = x2;
    body.apply_impulse(n * (x1 - xa), pa);
    body.apply_impulse(n * (x2 - xb), pb);
    true
}

/// Advances `body` by one step. Fingers keep their given pose and velocity;
/// the caller moves them afterwards. Returns the solved contacts.
pub fn step_body(
    body: &mut Body,
    fingers: &[KinematicDisk],
    walls: &[HalfPlane],
    params: &PhysicsParams,
) -> Vec<ContactReport> {
    let dt = params.dt;
    if !body.pinned {
        body.velocity += params.gravity * dt;
        body.velocity = body.velocity * (1.0 / (1.0 + params.linear_damping * dt));
    }
    body.angular_velocity *= 1.0 / (1.0 + params.angular_damping * dt);

    let parts = body.world_parts();
    let mut contacts: Vec<Solving> = Vec::new();
    let mut push = |with: Contactor, point: Vec2, normal: Vec2, sep: f64, other_v: Vec2, friction: f64, min_imp: f64| {
        let r = point - body.position;
        let t = normal.perp();
        let kn = body.inv_mass + body.inv_inertia * r.cross(normal).powi(2);
        let kt = body.inv_mass + body.inv_inertia * r.cross(t).powi(2);
        if kn <= 0.0 {
            return;
        }
        let target = if sep > 0.0 {
            -sep / dt
        } else {
            params.baumgarte * (-sep - params.slop).max(0.0) / dt
        };
        contacts.push(Solving {
            report: ContactReport {
                with,
                point,
                normal,
                separation: sep,
                normal_impulse: 0.0,
                tangent_impulse: 0.0,
            },
            other_velocity: other_v,
            friction,
            normal_mass: 1.0 / kn,
            tangent_mass: if kt > 0.0 { 1.0 / kt } else { 0.0 },
            target_normal_velocity: target,
            min_normal_impulse: if sep <= 0.0 { min_imp } else { 0.0 },
        });
    };
    for (fi, q, n, sep) in finger_contacts(&parts, fingers, params.speculative_margin) {
        let f = &fingers[fi];
        let mu = (f.friction * body.friction).sqrt();
        push(Contactor::Finger(fi), q, n, sep, f.velocity, mu, f.min_normal_impulse);
    }
    for (wi, v, n, sep) in wall_contacts(&parts, walls, params.speculative_margin) {
        let mu = (walls[wi].friction * body.friction).sqrt();
        push(Contactor::Wall(wi), v, n, sep, Vec2::ZERO, mu, 0.0);
    }

    // Two-point wall manifolds get a block solver so resting faces settle
    // without rocking.
    let mut blocks = Vec::new();
    let mut in_block = vec![false; contacts.len()];
    for wi in 0..walls.len() {
        let idx: Vec<usize> = (0..contacts.len())
            .filter(|&i| contacts[i].report.with == Contactor::Wall(wi))
            .collect();
        if idx.len() == 2 {
            blocks.push((idx[0], idx[1]));
            in_block[idx[0]] = true;
            in_block[idx[1]] = true;
        }
    }

    for _ in 0..params.iterations {
        for (i, c) in contacts.iter_mut().enumerate() {
            if !in_block[i] {
                solve_normal(body, c);
            }
            solve_friction(body, c);
        }
        for &(i, j) in &blocks {
            let (head, tail) = contacts.split_at_mut(j);
            if !solve_block(body, &mut head[i], &mut tail[0]) {
                solve_normal(body, &mut head[i]);
                solve_normal(body, &mut tail[0]);
            }
        }
    }

    if !body.pinned {
        body.position += body.velocity * dt;
    }
    body.angle += body.angular_velocity * dt;
    if let Some((lo, hi)) = body.angle_limits {
        if body.angle < lo {
            body.angle = lo;
            body.angular_velocity = body.angular_velocity.max(0.0);
        } else if body.angle > hi {
            body.angle = hi;
            body.angular_velocity = body.angular_velocity.min(0.0);
        }
    }
    contacts.into_iter().map(|c| c.report).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(half: f64) -> Vec<Vec<Vec2>> {
        vec![vec![
            Vec2::new(-half, -half),
            Vec2::new(half, -half),
            Vec2::new(half, half),
            Vec2::new(-half, half),
        ]]
    }

    #[test]
    fn resting_box_on_floor_stays_put() {
        let params = PhysicsParams::side_view();
        let mut body = Body::free(cube(0.025), 0.2, 0.5, Vec2::new(0.0, 0.025), 0.0);
        let floor = [HalfPlane {
            point: Vec2::ZERO,
            normal: Vec2::new(0.0, 1.0),
            friction: 0.5,
        }];
        for _ in 0..300 {
            step_body(&mut body, &[], &floor, &params);
        }
        assert!((body.position.y - 0.025).abs() < 2e-3, "{:?}", body.position);
        assert!(body.position.x.abs() < 1e-9);
        assert!(body.angle.abs() < 1e-9);
    }

    #[test]
    fn free_fall_accelerates_at_g() {
        let params = PhysicsParams::side_view();
        let mut body = Body::free(cube(0.025), 0.2, 0.5, Vec2::new(0.0, 1.0), 0.0);
        step_body(&mut body, &[], &[], &params);
        assert!((body.velocity.y + 9.81 / 60.0).abs() < 1e-12);
    }

    #[test]
    fn pushing_finger_moves_box() {
        let params = PhysicsParams::top_down();
        let mut body = Body::free(cube(0.025), 0.2, 0.5, Vec2::ZERO, 0.0);
        let mut finger = KinematicDisk {
            center: Vec2::new(-0.04, 0.0),
            velocity: Vec2::new(0.6, 0.0),
            radius: 0.01,
            friction: 1.0,
            min_normal_impulse: 0.0,
        };
        for _ in 0..10 {
            let c = step_body(&mut body, &[finger], &[], &params);
            assert!(c.iter().all(|c| c.normal_impulse >= 0.0));
            finger.center += finger.velocity * params.dt;
        }
        assert!(body.position.x > 0.04, "{:?}", body.position);
        // The finger never ends up inside the box by more than the slop.
        let sep = finger.center.x + 0.01 - (body.position.x - 0.025);
        assert!(sep < 1e-3, "{sep}");
    }

    #[test]
    fn hinged_door_respects_limits() {
        let params = PhysicsParams::top_down();
        let panel = vec![vec![
            Vec2::new(0.0, -0.01),
            Vec2::new(0.15, -0.01),
            Vec2::new(0.15, 0.01),
            Vec2::new(0.0, 0.01),
        ]];
        let mut door = Body::hinged(panel, 0.5, 0.5, Vec2::ZERO, 0.0, (0.0, 1.0));
        door.angular_velocity = -3.0;
        step_body(&mut door, &[], &[], &params);
        assert_eq!(door.angle, 0.0);
        assert_eq!(door.position, Vec2::ZERO);
        door.angular_velocity = 100.0;
        step_body(&mut door, &[], &[], &params);
        assert_eq!(door.angle, 1.0);
    }
}
