pub mod diagnose;
pub mod fwht;
pub mod info;
pub mod lidar;
pub mod reconstruct;
pub mod sense;
