//! Minimal routing inside a node mesh.

use serde::{Deserialize, Serialize};

use super::network::Dir;
use crate::topo::LocalCoord;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeshPolicy {
    /// X first, then Y.
    #[default]
    DimensionOrder,
    /// Any minimal path that never turns after moving north.
    NorthLast,
}

/// Admissible productive moves from `cur` towards `dst`, preferred first.
pub fn mesh_options(cur: LocalCoord, dst: LocalCoord, policy: MeshPolicy) -> &'static [Dir] {
    let x_move = match cur.x.cmp(&dst.x) {
        std::cmp::Ordering::Less => Some(Dir::East),
        std::cmp::Ordering::Greater => Some(Dir::West),
        std::cmp::Ordering::Equal => None,
    };
    let y_move = match cur.y.cmp(&dst.y) {
        std::cmp::Ordering::Less => Some(Dir::North),
        std::cmp::Ordering::Greater => Some(Dir::South),
        std::cmp::Ordering::Equal => None,
    };
    match (policy, x_move, y_move) {
        (_, None, None) => &[],
        (_, Some(x), None) => single(x),
        (_, None, Some(y)) => single(y),
        (MeshPolicy::DimensionOrder, Some(x), Some(_)) => single(x),
        (MeshPolicy::NorthLast, Some(x), Some(Dir::North)) => single(x),
        (MeshPolicy::NorthLast, Some(Dir::East), Some(_)) => &[Dir::East, Dir::South],
        (MeshPolicy::NorthLast, Some(_), Some(_)) => &[Dir::West, Dir::South],
    }
}

fn single(d: Dir) -> &'static [Dir] {
    match d {
        Dir::East => &[Dir::East],
        Dir::West => &[Dir::West],
        Dir::North => &[Dir::North],
        Dir::South => &[Dir::South],
    }
}

/// A minimal path as a move list, taking the preferred move at every step.
pub fn mesh_route(src: LocalCoord, dst: LocalCoord, policy: MeshPolicy) -> Vec<Dir> {
    let mut cur = src;
    let mut moves = Vec::with_capacity(src.manhattan(dst) as usize);
    while let Some(&dir) = mesh_options(cur, dst, policy).first() {
        cur = super::network::step_local(cur, dir);
        moves.push(dir);
    }
    moves
}
