// SPDX-License-Identifier: Apache-2.0
pub mod afe;
pub mod demos;
pub mod dsp;
pub mod lockstep;
pub mod qpu;
pub mod rng;
pub mod syncbus;
pub mod timebase;
pub mod tproc;
pub mod orchestrator;
