#![allow(dead_code)]

pub mod compare;
pub mod oracle;
