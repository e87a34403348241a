pub mod attack;
pub mod cookie;
pub mod evaluate;
pub mod flow;
pub mod http;
pub mod notification;
pub mod probe;
pub mod report;
pub mod spider;
pub mod testbed;
pub mod time;
pub mod totp;
