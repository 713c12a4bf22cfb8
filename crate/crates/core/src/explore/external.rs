//! Operator-driven policy: teleoperation commands and goal following.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use crate::simkernel::Velocity;

/// Seconds a velocity command stays in force without a fresh one.
pub const DEAD_MAN_TIMEOUT: f64 = 0.5;

/// An operator command for the robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TeleopCommand {
    CmdVel {
        v: f64,
        #[serde(rename = "omega", alias = "w", alias = "ω")]
        w: f64,
    },
    SetGoal {
        x: f64,
        y: f64,
    },
}

/// Bounded multi-producer queue; when full the oldest entry is dropped.
#[derive(Debug)]
pub struct CommandQueue<T> {
    inner: Arc<Mutex<VecDeque<T>>>,
    capacity: usize,
}

impl<T> Clone for CommandQueue<T> {
    fn clone(&self) -> Self {
        Self {
            inner: Arc::clone(&self.inner),
            capacity: self.capacity,
        }
    }
}

impl<T> CommandQueue<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self {
            inner: Arc::new(Mutex::new(VecDeque::with_capacity(capacity))),
            capacity,
        }
    }

    pub fn push(&self, item: T) {
        let mut q = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        if q.len() == self.capacity {
            q.pop_front();
        }
        q.push_back(item);
    }

    /// Takes everything queued so far, oldest first.
    pub fn drain(&self) -> Vec<T> {
        let mut q = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        q.drain(..).collect()
    }
}

/// What the operator currently asks for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Directive {
    Velocity(Velocity),
    Goal { x: f64, y: f64 },
    Idle,
}

/// Folds operator commands into one directive per tick.
///
/// The latest command wins: a velocity cancels a goal and vice versa.
/// Velocities expire after the dead-man timeout; goals persist until reached
/// or replaced.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalController {
    dead_man: f64,
    velocity: Option<(Velocity, f64)>,
    goal: Option<(f64, f64)>,
}

impl Default for ExternalController {
    fn default() -> Self {
        Self::new(DEAD_MAN_TIMEOUT)
    }
}

impl ExternalController {
    pub fn new(dead_man: f64) -> Self {
        Self {
            dead_man,
            velocity: None,
            goal: None,
        }
    }

    /// Registers a command received at sim time `t`.
    pub fn receive(&mut self, cmd: TeleopCommand, t: f64) {
        match cmd {
            TeleopCommand::CmdVel { v, w } => {
                self.velocity = Some((Velocity::new(v, w), t));
                self.goal = None;
            }
            TeleopCommand::SetGoal { x, y } => {
                self.goal = Some((x, y));
                self.velocity = None;
            }
        }
    }

    pub fn clear_goal(&mut self) {
        self.goal = None;
    }

    pub fn directive(&self, t: f64) -> Directive {
        if let Some((v, since)) = self.velocity {
            if t - since <= self.dead_man + 1e-9 {
                return Directive::Velocity(v);
            }
        }
        match self.goal {
            Some((x, y)) => Directive::Goal { x, y },
            None => Directive::Idle,
        }
    }
}

/// Drains `queue` into `controller` at time `t` and returns the directive.
pub fn external_command(
    queue: &CommandQueue<TeleopCommand>,
    controller: &mut ExternalController,
    t: f64,
) -> Directive {
    for cmd in queue.drain() {
        controller.receive(cmd, t);
    }
    controller.directive(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silence_means_stop() {
        let q = CommandQueue::new(8);
        let mut c = ExternalController::default();
        assert_eq!(external_command(&q, &mut c, 0.0), Directive::Idle);
        q.push(TeleopCommand::CmdVel { v: 0.3, w: 0.1 });
        assert_eq!(
            external_command(&q, &mut c, 1.0),
            Directive::Velocity(Velocity::new(0.3, 0.1))
        );
        assert_eq!(
            external_command(&q, &mut c, 1.5),
            Directive::Velocity(Velocity::new(0.3, 0.1))
        );
        assert_eq!(external_command(&q, &mut c, 2.0), Directive::Idle);
    }

    #[test]
    fn latest_velocity_wins() {
        let q = CommandQueue::new(8);
        let mut c = ExternalController::default();
        q.push(TeleopCommand::CmdVel { v: 0.3, w: 0.0 });
        q.push(TeleopCommand::CmdVel { v: -0.1, w: 0.5 });
        assert_eq!(
            external_command(&q, &mut c, 0.1),
            Directive::Velocity(Velocity::new(-0.1, 0.5))
        );
    }

    #[test]
    fn goals_persist_and_velocities_cancel_them() {
        let q = CommandQueue::new(8);
        let mut c = ExternalController::default();
        q.push(TeleopCommand::SetGoal { x: 2.0, y: 3.0 });
        assert_eq!(
            external_command(&q, &mut c, 0.0),
            Directive::Goal { x: 2.0, y: 3.0 }
        );
        assert_eq!(
            external_command(&q, &mut c, 60.0),
            Directive::Goal { x: 2.0, y: 3.0 }
        );
        q.push(TeleopCommand::CmdVel { v: 0.0, w: 0.0 });
        external_command(&q, &mut c, 61.0);
        assert_eq!(external_command(&q, &mut c, 62.0), Directive::Idle);
    }

    #[test]
    fn full_queue_drops_the_oldest() {
        let q = CommandQueue::new(2);
        for v in [0.1, 0.2, 0.3] {
            q.push(TeleopCommand::CmdVel { v, w: 0.0 });
        }
        let got: Vec<_> = q.drain();
        assert_eq!(got.len(), 2);
        assert_eq!(got[0], TeleopCommand::CmdVel { v: 0.2, w: 0.0 });
        assert!(q.drain().is_empty());
    }

    #[test]
    fn wire_names() {
        let c: TeleopCommand =
            serde_json::from_str(r#"{"type":"cmd_vel","v":0.2,"ω":0.1}"#).unwrap();
        assert_eq!(c, TeleopCommand::CmdVel { v: 0.2, w: 0.1 });
        let c: TeleopCommand =
            serde_json::from_str(r#"{"type":"cmd_vel","v":0.2,"omega":0.1}"#).unwrap();
        assert_eq!(c, TeleopCommand::CmdVel { v: 0.2, w: 0.1 });
        assert_eq!(
            serde_json::to_string(&TeleopCommand::SetGoal { x: 1.0, y: 2.0 }).unwrap(),
            r#"{"type":"set_goal","x":1.0,"y":2.0}"#
        );
    }
}
