pub mod bus;
pub mod cell;
pub mod command;
pub mod config;
pub mod controller;
pub mod kinematics;
pub mod periodic;
pub mod planner;
pub mod sim;
