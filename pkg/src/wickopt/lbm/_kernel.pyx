# cython: boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled D3Q19 time step; the arithmetic lives in ``d3q19_core.h``."""

cdef extern from "d3q19_core.h" nogil:
    int d3q19_step(const double* fin, double* fout, Py_ssize_t plane, const unsigned char* solid,
                   Py_ssize_t nz, Py_ssize_t ny, Py_ssize_t nx, double tau,
                   double rho_in, double rho_out, double* jx_total, double* umax2)


def step(double[:, :, :, :] f_in, double[:, :, :, :] f_out,
         const unsigned char[:, :, ::1] solid, double tau, double rho_in, double rho_out):
    """Advance one time step from ``f_in`` into ``f_out`` (both ``[q, z, y, x]``).

    The q axis may be strided (see ``solver.population_array``); the other
    axes must be C-contiguous.

    Returns ``(sum of x-momentum over fluid nodes, max speed squared)``.
    """
    cdef Py_ssize_t nz = solid.shape[0], ny = solid.shape[1], nx = solid.shape[2]
    cdef double jx = 0.0, um = 0.0
    cdef int rc
    if f_in.shape[0] != 19 or f_out.shape[0] != 19:
        raise ValueError("populations need a leading axis of 19")
    for k in range(3):
        if f_in.shape[k + 1] != solid.shape[k] or f_out.shape[k + 1] != solid.shape[k]:
            raise ValueError("population and solid shapes disagree")
    for a in (f_in, f_out):
        if a.strides[3] != 8 or a.strides[2] != 8 * nx or a.strides[1] != 8 * nx * ny \
                or a.strides[0] < 8 * nx * ny * nz:
            raise ValueError("populations must be C-contiguous within each q plane")
    if f_in.strides[0] != f_out.strides[0]:
        raise ValueError("f_in and f_out need the same q stride")
    if nx < 2:
        raise ValueError("flow axis needs at least two layers")
    with nogil:
        rc = d3q19_step(&f_in[0, 0, 0, 0], &f_out[0, 0, 0, 0], f_in.strides[0] // 8, &solid[0, 0, 0],
                        nz, ny, nx, tau, rho_in, rho_out, &jx, &um)
    if rc != 0:
        raise MemoryError()
    return jx, um
