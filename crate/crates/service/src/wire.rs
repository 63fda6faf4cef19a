//! Message encoding for the WebSocket protocol.
//!
//! Every message is an envelope `{type, seq, t_sim, payload}`. Text frames
//! carry JSON envelopes. Clouds travel as binary frames: a little-endian
//! `u32` header length, the JSON envelope of type `cloud`, then the cloud
//! in the sequence-store MSPC layout.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use lidarsim_core::store::{decode_cloud, encode_cloud};
use lidarsim_core::{Pose, PointCloudFrame};

pub const PROTOCOL: &str = "lidarsim-ws";
pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<P = Value> {
    #[serde(rename = "type")]
    pub kind: String,
    pub seq: u64,
    pub t_sim: f64,
    pub payload: P,
}

/// Error codes sent in `error` payloads.
pub mod code {
    pub const MALFORMED: &str = "malformed";
    pub const UNKNOWN_TYPE: &str = "unknown_type";
    pub const BAD_PAYLOAD: &str = "bad_payload";
    pub const BAD_SEQ: &str = "bad_seq";
    pub const HELLO_REQUIRED: &str = "hello_required";
    pub const CONTROLLER_EXISTS: &str = "controller_exists";
    pub const NOT_CONTROLLER: &str = "not_controller";
    pub const BINARY_REJECTED: &str = "binary_rejected";
    pub const INVALID_WAYPOINTS: &str = "invalid_waypoints";
    pub const RECORD_UNAVAILABLE: &str = "record_unavailable";
    pub const ENGINE_FAILURE: &str = "engine_failure";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub code: String,
    pub message: String,
}

/// A rejected client message. `fatal` errors close the connection.
#[derive(Debug, Clone, PartialEq)]
pub struct WireError {
    pub code: &'static str,
    pub message: String,
    pub fatal: bool,
}

impl WireError {
    pub fn fatal(code: &'static str, message: impl Into<String>) -> Self {
        Self { code, message: message.into(), fatal: true }
    }

    pub fn soft(code: &'static str, message: impl Into<String>) -> Self {
        Self { code, message: message.into(), fatal: false }
    }

    pub fn payload(&self) -> ErrorPayload {
        ErrorPayload { code: self.code.to_string(), message: self.message.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Controller,
    Observer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientHello {
    pub role: Role,
    #[serde(default)]
    pub version: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum TeleopCommand {
    Key { key: String },
    Twist { v: f64, w: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaypointsCommand {
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunAction {
    Start,
    Pause,
    Reset,
    /// Toggles recording to a new bundle.
    Record,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunCommand {
    pub action: RunAction,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClientMessage {
    Hello(ClientHello),
    Teleop(TeleopCommand),
    Waypoints(Vec<[f64; 2]>),
    Run(RunAction),
}

impl ClientMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            ClientMessage::Hello(_) => "hello",
            ClientMessage::Teleop(_) => "cmd_teleop",
            ClientMessage::Waypoints(_) => "cmd_waypoints",
            ClientMessage::Run(_) => "cmd_run",
        }
    }

    pub fn is_command(&self) -> bool {
        !matches!(self, ClientMessage::Hello(_))
    }

    fn payload(&self) -> Value {
        let v = match self {
            ClientMessage::Hello(h) => serde_json::to_value(h),
            ClientMessage::Teleop(t) => serde_json::to_value(t),
            ClientMessage::Waypoints(p) => serde_json::to_value(WaypointsCommand { points: p.clone() }),
            ClientMessage::Run(a) => serde_json::to_value(RunCommand { action: *a }),
        };
        v.expect("client payloads serialize")
    }
}

fn payload<T: for<'de> Deserialize<'de>>(kind: &str, v: Value) -> Result<T, WireError> {
    serde_json::from_value(v).map_err(|e| WireError::fatal(code::BAD_PAYLOAD, format!("{kind}: {e}")))
}

/// Parse one client text frame into its sequence number and message.
pub fn decode_client(text: &str) -> Result<(u64, ClientMessage), WireError> {
    let env: Envelope = serde_json::from_str(text).map_err(|e| WireError::fatal(code::MALFORMED, e.to_string()))?;
    let msg = match env.kind.as_str() {
        "hello" => ClientMessage::Hello(payload(&env.kind, env.payload)?),
        "cmd_teleop" => {
            let t: TeleopCommand = payload(&env.kind, env.payload)?;
            if let TeleopCommand::Twist { v, w } = t {
                if !v.is_finite() || !w.is_finite() {
                    return Err(WireError::fatal(code::BAD_PAYLOAD, "cmd_teleop: non-finite twist"));
                }
            }
            ClientMessage::Teleop(t)
        }
        "cmd_waypoints" => {
            let w: WaypointsCommand = payload(&env.kind, env.payload)?;
            ClientMessage::Waypoints(w.points)
        }
        "cmd_run" => {
            let r: RunCommand = payload(&env.kind, env.payload)?;
            ClientMessage::Run(r.action)
        }
        other => return Err(WireError::fatal(code::UNKNOWN_TYPE, format!("unknown message type `{other}`"))),
    };
    Ok((env.seq, msg))
}

pub fn encode_client(seq: u64, t_sim: f64, msg: &ClientMessage) -> String {
    encode_text(msg.kind(), seq, t_sim, msg.payload())
}

pub fn encode_text(kind: &str, seq: u64, t_sim: f64, payload: Value) -> String {
    serde_json::to_string(&Envelope { kind: kind.to_string(), seq, t_sim, payload }).expect("envelopes serialize")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerHello {
    pub protocol: String,
    pub version: u32,
    pub role: Role,
    pub scene: String,
    pub lidar: String,
    pub tick_rate: f64,
    pub state_rate: f64,
    pub frame_rate: f64,
    pub cloud_cap: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarPose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Twist {
    pub v: f64,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerStatus {
    pub target_index: usize,
    pub samples: usize,
    pub finished: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoverFootprint {
    pub id: String,
    pub footprint: Footprint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePayload {
    pub pose: PlanarPose,
    /// Twist applied over the last tick.
    pub twist: Twist,
    pub tracker: Option<TrackerStatus>,
    pub running: bool,
    pub recording: bool,
    /// Highest controller `seq` already applied, 0 before any.
    pub ack: u64,
    pub frames: u64,
    pub movers: Vec<MoverFootprint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPayload {
    pub points: Vec<[f64; 2]>,
    pub control_points: Vec<[f64; 2]>,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Footprint {
    /// Counter-clockwise outline on the ground plane.
    Polygon(Vec<[f64; 2]>),
    Circle { center: [f64; 2], radius: f64 },
    /// Unbounded geometry such as a floor plane.
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectFootprint {
    pub id: String,
    pub kind: String,
    pub mover: bool,
    pub footprint: Footprint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSummaryPayload {
    pub name: String,
    pub objects: Vec<ObjectFootprint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudHeader {
    pub frame: u64,
    pub t0: f64,
    pub points: usize,
    pub original_points: usize,
    /// Voxel edge used, 0 when sent at full resolution.
    pub voxel: f64,
    /// Sensor pose at the end of the frame: position then `w x y z`.
    pub sensor_position: [f64; 3],
    pub sensor_orientation: [f64; 4],
}

impl CloudHeader {
    pub fn new(frame: &PointCloudFrame, original_points: usize, voxel: f64, sensor: &Pose) -> Self {
        Self {
            frame: frame.index,
            t0: frame.t0,
            points: frame.points.len(),
            original_points,
            voxel,
            sensor_position: [sensor.position.x, sensor.position.y, sensor.position.z],
            sensor_orientation: sensor.quat_wxyz(),
        }
    }
}

/// Build a binary cloud message around pre-encoded MSPC bytes.
pub fn encode_cloud_message(seq: u64, t_sim: f64, header: &CloudHeader, mspc: &[u8]) -> Vec<u8> {
    let head = encode_text("cloud", seq, t_sim, serde_json::to_value(header).expect("header serializes"));
    let mut out = Vec::with_capacity(4 + head.len() + mspc.len());
    out.extend_from_slice(&(head.len() as u32).to_le_bytes());
    out.extend_from_slice(head.as_bytes());
    out.extend_from_slice(mspc);
    out
}

pub fn encode_cloud_frame(seq: u64, t_sim: f64, header: &CloudHeader, frame: &PointCloudFrame) -> Vec<u8> {
    encode_cloud_message(seq, t_sim, header, &encode_cloud(frame))
}

pub fn decode_cloud_message(bytes: &[u8]) -> Result<(Envelope<CloudHeader>, PointCloudFrame), WireError> {
    let bad = |m: String| WireError::fatal(code::MALFORMED, m);
    if bytes.len() < 4 {
        return Err(bad("cloud message shorter than its length prefix".into()));
    }
    let n = u32::from_le_bytes(bytes[..4].try_into().expect("4 bytes")) as usize;
    let head = bytes.get(4..4 + n).ok_or_else(|| bad("cloud header runs past the message".into()))?;
    let env: Envelope<CloudHeader> = serde_json::from_slice(head).map_err(|e| bad(e.to_string()))?;
    if env.kind != "cloud" {
        return Err(bad(format!("binary message of type `{}`", env.kind)));
    }
    let frame = decode_cloud(&bytes[4 + n..], env.payload.frame, "cloud").map_err(|e| bad(e.to_string()))?;
    Ok((env, frame))
}

#[cfg(test)]
mod tests {
    use super::*;
    use lidarsim_core::sensors::LidarPoint;
    use nalgebra::Vector3;

    #[test]
    fn client_round_trip() {
        let msgs = [
            ClientMessage::Hello(ClientHello { role: Role::Controller, version: Some(1) }),
            ClientMessage::Teleop(TeleopCommand::Key { key: "forward".into() }),
            ClientMessage::Teleop(TeleopCommand::Twist { v: 0.2, w: -0.1 }),
            ClientMessage::Waypoints(vec![[0.0, 0.0], [1.0, 2.0]]),
            ClientMessage::Run(RunAction::Reset),
        ];
        for (i, m) in msgs.iter().enumerate() {
            let text = encode_client(i as u64 + 1, 0.5, m);
            assert_eq!(decode_client(&text).unwrap(), (i as u64 + 1, m.clone()));
        }
    }

    #[test]
    fn documented_shapes_parse() {
        let (seq, m) = decode_client(r#"{"type":"cmd_run","seq":4,"t_sim":0,"payload":{"action":"pause"}}"#).unwrap();
        assert_eq!((seq, m), (4, ClientMessage::Run(RunAction::Pause)));
        let (_, m) = decode_client(r#"{"type":"cmd_teleop","seq":5,"t_sim":0,"payload":{"key":"ArrowUp"}}"#).unwrap();
        assert_eq!(m, ClientMessage::Teleop(TeleopCommand::Key { key: "ArrowUp".into() }));
    }

    #[test]
    fn violations_are_fatal() {
        for text in [
            "not json",
            r#"{"type":"cmd_fly","seq":1,"t_sim":0,"payload":{}}"#,
            r#"{"type":"cmd_teleop","seq":1,"t_sim":0,"payload":{"v":1}}"#,
            r#"{"type":"cmd_run","seq":1,"t_sim":0,"payload":{"action":"explode"}}"#,
            r#"{"type":"hello","seq":1,"payload":{"role":"controller"}}"#,
        ] {
            let e = decode_client(text).unwrap_err();
            assert!(e.fatal, "{text}");
        }
    }

    #[test]
    fn cloud_round_trip() {
        let frame = PointCloudFrame {
            index: 7,
            t0: 0.7,
            points: vec![LidarPoint { xyz: Vector3::new(1.0, 2.0, 3.0), intensity: 0.5, dt: 0.01 }],
        };
        let header = CloudHeader::new(&frame, 10, 0.05, &Pose::from_translation(1.0, 0.0, 0.3));
        let bytes = encode_cloud_frame(9, 0.8, &header, &frame);
        let (env, back) = decode_cloud_message(&bytes).unwrap();
        assert_eq!(env.seq, 9);
        assert_eq!(env.payload, header);
        assert_eq!(back, lidarsim_core::store::quantize_frame(&frame));
        assert!(decode_cloud_message(&bytes[..bytes.len() - 3]).is_err());
        assert!(decode_cloud_message(&[1, 0]).is_err());
    }
}
