use thiserror::Error;

use crate::ids::{ChannelId, NetworkId, NodeId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FabricError {
    #[error("node {0:?} is not attached to the network")]
    NotAttached(NodeId),

    #[error("node {0:?} is not a member of network {1:?}")]
    NoSuchMember(NodeId, NetworkId),

    #[error("no path between {0:?} and {1:?} for the requested channel class")]
    NoPath(NodeId, NodeId),

    #[error("TLS responder {0:?} presented no valid certificate")]
    TlsRejected(NodeId),

    #[error("unknown node {0:?}")]
    UnknownNode(NodeId),

    #[error("unknown network {0:?}")]
    UnknownNetwork(NetworkId),

    #[error("unknown channel {0:?}")]
    UnknownChannel(ChannelId),

    #[error("node {0:?} is not an endpoint of channel {1:?}")]
    NotChannelEndpoint(NodeId, ChannelId),

    #[error("no address found for ip {0}")]
    UnknownAddress(String),
}

pub type Result<T> = std::result::Result<T, FabricError>;
