import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components


def closed_classes(adjacency) -> list[np.ndarray]:
    """Closed communicating classes of a directed graph.

    ``adjacency`` is any (sparse or dense) square matrix whose nonzero
    off-diagonal entries are the allowed transitions.  Returns the sorted
    member states of every strongly connected component with no exit.
    """
    A = sp.csr_matrix(adjacency, dtype=float, copy=True)
    A.setdiag(0)
    A.eliminate_zeros()
    ncomp, labels = connected_components(A, directed=True, connection="strong")
    coo = A.tocoo()
    leaving = labels[coo.row] != labels[coo.col]
    has_exit = np.zeros(ncomp, dtype=bool)
    has_exit[labels[coo.row[leaving]]] = True
    return [np.flatnonzero(labels == c) for c in range(ncomp) if not has_exit[c]]
