//! Peer-to-peer energy trading simulator for battery-owning prosumers.
//!
//! A community of prosumers (solar PV + battery + load) trades energy each
//! half-hour slot through a platform that prices energy from the community
//! supply-to-demand ratio. A radial distribution network underneath the
//! market is solved with linearized branch-flow equations, and per-bus
//! network tariffs derived from locational marginal prices feed back into
//! each agent's reward. Agents learn charge/discharge policies with a
//! multi-agent deep deterministic policy gradient scheme (centralized
//! critics, decentralized actors).

pub mod environment;
pub mod maddpg;
pub mod network;
pub mod oracle;
pub mod pricing;
pub mod profiles;
pub mod prosumer;
