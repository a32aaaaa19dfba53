/* D3Q19 BGK time step: pull streaming with halfway bounce-back, Zou-He
 * density planes at x = 0 and x = nx - 1, then collision.
 *
 * Layout: f[q][z][y][x], solid[z][y][x], flow along x. Nodes outside the
 * y/z range are walls. Interior nodes of each row run through a simd loop;
 * the two density planes are handled by a scalar path.
 */
#ifndef WICKOPT_D3Q19_CORE_H
#define WICKOPT_D3Q19_CORE_H

#include <stddef.h>
#include <stdlib.h>

static const int D3Q19_CX[19] = {0, 1, -1, 0, 0, 0, 0, 1, -1, 1, -1, 1, -1, 1, -1, 0, 0, 0, 0};
static const int D3Q19_CY[19] = {0, 0, 0, 1, -1, 0, 0, 1, -1, -1, 1, 0, 0, 0, 0, 1, -1, 1, -1};
static const int D3Q19_CZ[19] = {0, 0, 0, 0, 0, 1, -1, 0, 0, 0, 0, 1, -1, -1, 1, 1, -1, -1, 1};
static const int D3Q19_OPP[19] = {0, 2, 1, 4, 3, 6, 5, 8, 7, 10, 9, 12, 11, 14, 13, 16, 15, 18, 17};
static const double D3Q19_W[19] = {
    1.0 / 3.0,
    1.0 / 18.0, 1.0 / 18.0, 1.0 / 18.0, 1.0 / 18.0, 1.0 / 18.0, 1.0 / 18.0,
    1.0 / 36.0, 1.0 / 36.0, 1.0 / 36.0, 1.0 / 36.0, 1.0 / 36.0, 1.0 / 36.0,
    1.0 / 36.0, 1.0 / 36.0, 1.0 / 36.0, 1.0 / 36.0, 1.0 / 36.0, 1.0 / 36.0};

/* Relax f toward equilibrium and store into out[q][x]. Solid nodes (fl = 0)
 * are written as zero. Returns |u|^2; *jx receives the fluid x-momentum. */
static inline __attribute__((always_inline)) double
d3q19_collide(const double *f, double fl, double omega, double *const *out, ptrdiff_t x, double *jx)
{
    double rho = 0.0, mx = 0.0, my = 0.0, mz = 0.0;
#pragma GCC unroll 19
    for (int q = 0; q < 19; ++q) {
        rho += f[q];
        mx += D3Q19_CX[q] * f[q];
        my += D3Q19_CY[q] * f[q];
        mz += D3Q19_CZ[q] * f[q];
    }
    *jx = fl * mx;
    /* solid: rho -> 1, u -> 0 keeps the arithmetic finite */
    double inv = fl / (fl * rho + (1.0 - fl));
    rho = fl * rho + (1.0 - fl);
    double ux = mx * inv, uy = my * inv, uz = mz * inv;
    double usq = ux * ux + uy * uy + uz * uz;
    double base = 1.0 - 1.5 * usq;
#pragma GCC unroll 19
    for (int q = 0; q < 19; ++q) {
        double cu = D3Q19_CX[q] * ux + D3Q19_CY[q] * uy + D3Q19_CZ[q] * uz;
        double feq = D3Q19_W[q] * rho * (base + 3.0 * cu + 4.5 * cu * cu);
        out[q][x] = fl * (f[q] - omega * (f[q] - feq));
    }
    return usq;
}

/* Density boundary; side = +1 at the inlet (unknowns have cx = +1), -1 at the outlet. */
static inline void d3q19_zou_he(double *f, double rho, int side)
{
    double s0 = 0.0, sk = 0.0, ny = 0.0, nz = 0.0;
    for (int q = 0; q < 19; ++q) {
        if (D3Q19_CX[q] == 0) {
            s0 += f[q];
            ny += D3Q19_CY[q] * f[q];
            nz += D3Q19_CZ[q] * f[q];
        } else if (D3Q19_CX[q] == -side) {
            sk += f[q];
        }
    }
    ny *= 0.5;
    nz *= 0.5;
    double ux = side * (1.0 - (s0 + 2.0 * sk) / rho);
    for (int q = 0; q < 19; ++q)
        if (D3Q19_CX[q] == side)
            f[q] = f[D3Q19_OPP[q]] + 6.0 * D3Q19_W[q] * rho * D3Q19_CX[q] * ux
                   - D3Q19_CY[q] * ny - D3Q19_CZ[q] * nz;
}

/* Returns 0 on success, -1 if scratch allocation failed. */
/* ``plane`` is the distance (in doubles) between consecutive q planes of
 * fin/fout; padding it away from a power of two avoids cache-set conflicts
 * between the 19 streams. */
static int d3q19_step(const double *fin, double *fout, ptrdiff_t plane, const unsigned char *solid,
                      ptrdiff_t nz, ptrdiff_t ny, ptrdiff_t nx, double tau,
                      double rho_in, double rho_out, double *jx_total, double *umax2)
{
    const double omega = 1.0 / tau;
    const double *src[19];
    const double *bb[19];
    const unsigned char *ssol[19];
    double *out[19];
    double jxt = 0.0, um = 0.0;
    /* all-solid row padded by one cell each side: stands in for rows beyond the walls */
    unsigned char *wall = (unsigned char *)malloc((size_t)nx + 2);
    if (wall == NULL)
        return -1;
    for (ptrdiff_t i = 0; i < nx + 2; ++i)
        wall[i] = 1;

    for (ptrdiff_t z = 0; z < nz; ++z) {
        for (ptrdiff_t y = 0; y < ny; ++y) {
            const ptrdiff_t row = (z * ny + y) * nx;
            const unsigned char *here = solid + row;
            for (int q = 0; q < 19; ++q) {
                const ptrdiff_t zs = z - D3Q19_CZ[q], ys = y - D3Q19_CY[q];
                bb[q] = fin + D3Q19_OPP[q] * plane + row;
                out[q] = fout + q * plane + row;
                if (zs < 0 || zs >= nz || ys < 0 || ys >= ny) {
                    src[q] = bb[q];
                    ssol[q] = wall + 1;
                } else {
                    const ptrdiff_t srow = (zs * ny + ys) * nx;
                    src[q] = fin + q * plane + srow;
                    ssol[q] = solid + srow;
                }
            }

#pragma omp simd reduction(+ : jxt) reduction(max : um)
            for (ptrdiff_t x = 1; x < nx - 1; ++x) {
                double f[19];
#pragma GCC unroll 19
                for (int q = 0; q < 19; ++q) {
                    const ptrdiff_t xs = x - D3Q19_CX[q];
                    /* load both candidates so the choice is a blend, not a masked load */
                    const double back = bb[q][x], streamed = src[q][xs];
                    f[q] = ssol[q][xs] ? back : streamed;
                }
                double jx;
                double usq = d3q19_collide(f, 1.0 - here[x], omega, out, x, &jx);
                jxt += jx;
                um = usq > um ? usq : um;
            }

            for (int side = 1; side >= -1; side -= 2) {
                const ptrdiff_t x = side == 1 ? 0 : nx - 1;
                double f[19];
                for (int q = 0; q < 19; ++q) {
                    const ptrdiff_t xs = x - D3Q19_CX[q];
                    if (xs < 0 || xs >= nx)
                        f[q] = 0.0; /* unknown; set by the density boundary */
                    else
                        f[q] = ssol[q][xs] ? bb[q][x] : src[q][xs];
                }
                if (!here[x])
                    d3q19_zou_he(f, side == 1 ? rho_in : rho_out, side);
                double jx;
                double usq = d3q19_collide(f, 1.0 - here[x], omega, out, x, &jx);
                jxt += jx;
                um = usq > um ? usq : um;
                if (nx == 1)
                    break;
            }
        }
    }
    free(wall);
    *jx_total = jxt;
    *umax2 = um;
    return 0;
}

#endif
