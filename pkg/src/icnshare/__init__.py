"""Content sharing over ICN storage nodes with identity-based proxy re-encryption."""
from .ibpre import (
    DomainParams,
    GtPlaintext,
    LeveledCiphertext,
    MasterSecret,
    ReencryptionKey,
    UserSecretKey,
    decrypt,
    derive_sym_key,
    encrypt,
    extract,
    reencrypt,
    rkgen,
    setup,
)
from .content import SealedItem, open_item_as_delegatee, open_item_as_owner, seal_item
from .node import NodeTables, StorageNode

__version__ = "0.1.0"
