#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace agritag::geo {

inline constexpr double kEarthRadiusM = 6'371'000.0;

/// WGS-84 position. `alt_agl_m` is ignored by the 2-D helpers.
struct GeoPoint {
    double lat = 0.0;
    double lon = 0.0;
    double alt_agl_m = 0.0;

    bool operator==(const GeoPoint&) const = default;
};

/// Throws InvariantViolation unless lat/lon are in range and altitude is non-negative.
void validate(const GeoPoint& p);

/// Great-circle distance on a sphere of radius kEarthRadiusM.
double haversine_m(const GeoPoint& a, const GeoPoint& b);

/// Horizontal great-circle distance combined with the AGL altitude difference.
/// Assumes locally flat terrain, which is fine at link-budget scales.
double distance_3d_m(const GeoPoint& a, const GeoPoint& b);

/// Local tangent-plane displacement (metres east/north/up) applied to `p`.
/// The resulting altitude is clamped at ground level.
GeoPoint offset_by(const GeoPoint& p, double east_m, double north_m, double up_m);

/// Moves horizontally from `from` toward `to` by at most `max_step_m`.
/// Lands exactly on `to` (lat/lon) when within reach. Altitude is kept from `from`.
GeoPoint step_toward(const GeoPoint& from, const GeoPoint& to, double max_step_m);

/// ESRI ASCII grid of ground elevation (metres ASL). Values are cell-centred,
/// row 0 is the northernmost row.
class ElevationRaster {
public:
    ElevationRaster(int ncols, int nrows, double xll, double yll, double cellsize,
                    double nodata, std::vector<double> values);

    int ncols() const noexcept { return ncols_; }
    int nrows() const noexcept { return nrows_; }
    double xll() const noexcept { return xll_; }
    double yll() const noexcept { return yll_; }
    double cellsize() const noexcept { return cellsize_; }
    double nodata() const noexcept { return nodata_; }
    const std::vector<double>& values() const noexcept { return values_; }

    double at(int row, int col) const { return values_[static_cast<size_t>(row) * ncols_ + col]; }
    bool is_nodata(double v) const noexcept { return v == nodata_; }

    bool contains(double lat, double lon) const noexcept;

    bool operator==(const ElevationRaster&) const = default;

private:
    int ncols_;
    int nrows_;
    double xll_;
    double yll_;
    double cellsize_;
    double nodata_;
    std::vector<double> values_;
};

/// Bilinear interpolation between the four surrounding cell centres.
/// Points between the raster edge and the outermost centres use the edge value.
/// Throws OutOfBounds or NoData.
double ground_height_at(const ElevationRaster& r, double lat, double lon);

/// Parses an ESRI ASCII grid. Throws ParseError (with line) or InvariantViolation.
ElevationRaster load_raster(std::string_view text);

/// Canonical ASCII-grid text; load_raster(emit_raster(r)) == r.
std::string emit_raster(const ElevationRaster& r);

/// Flight-zone fence in the lon/lat plane, implicitly closed.
class BoundaryPolygon {
public:
    /// Throws InvariantViolation for < 3 vertices or a self-intersecting ring.
    explicit BoundaryPolygon(std::vector<GeoPoint> vertices);

    const std::vector<GeoPoint>& vertices() const noexcept { return vertices_; }

    /// Vertex average; inside for convex polygons.
    GeoPoint centroid() const;

private:
    std::vector<GeoPoint> vertices_;
};

/// Ray casting; points on an edge or vertex count as inside.
bool point_in_polygon(const BoundaryPolygon& poly, const GeoPoint& q);

/// True when the straight segment a-b stays inside the polygon.
bool segment_in_polygon(const BoundaryPolygon& poly, const GeoPoint& a, const GeoPoint& b);

} // namespace agritag::geo
