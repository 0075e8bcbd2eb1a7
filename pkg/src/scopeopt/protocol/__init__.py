"""Wire messages, frame codec, transports and communication counters."""

from .messages import (MESSAGE_TYPES, FullGrad, Hello, InnerParams, LocalGradSum,
                       LocalUpdate, Message, MiniBatchStats, Params, Shutdown)
from .transport import (CommCounter, CommStats, InProcessSession, PeerDisconnected,
                        ProtocolError, ProtocolOrderError, Session, TcpListener,
                        TcpSession, TransportError, inproc_pair, parse_addr, tcp_connect)
from .wire import (MAGIC, BadMagic, FrameError, Oversize, TrailingBytes, Truncated,
                   UnknownTag, decode, encode)
