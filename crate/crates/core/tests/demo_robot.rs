use std::path::PathBuf;

use carl_core::config::ControllerConfig;
use carl_core::controller::Servo;
use carl_core::kinematics::{load_description, Snapshot};
use carl_core::planner::{load_behaviors, Planner};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn read(rel: &str) -> String {
    std::fs::read_to_string(root().join(rel)).unwrap()
}

#[test]
fn shipped_files_load_and_agree() {
    let desc = std::sync::Arc::new(load_description(&read("robots/demo_humanoid.json")).unwrap());
    let cfg = ControllerConfig::parse(&read("config/controller.json")).unwrap();
    cfg.validate(&desc).unwrap();
    Servo::new(desc.clone(), cfg.servo, cfg.tasks.clone(), cfg.constraints.clone()).unwrap();
    let home = cfg.home_posture(&desc);
    let snap = Snapshot::new(&desc, &home).unwrap();
    for f in ["right_palm", "left_palm", "right_gripper", "left_gripper"] {
        let p = snap.pose(f).unwrap();
        println!("{f}: {:?} {:?}", p.position.as_slice(), p.quat_wxyz());
    }
    let behaviors = load_behaviors(&root().join("behaviors")).unwrap();
    for name in ["wave", "handshake", "horns"] {
        assert!(behaviors.contains_key(name), "missing behavior {name}");
    }
    Planner::new(desc.clone(), cfg.clone(), behaviors).unwrap();

}
