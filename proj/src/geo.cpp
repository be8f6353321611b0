#include "agritag/geo.hpp"

#include "agritag/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>

namespace agritag::geo {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

std::string format_double(double v)
{
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view tok, int line)
{
    double v = 0.0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
        throw ParseError("not a number: '" + std::string(tok) + "'", line);
    return v;
}

std::vector<std::string_view> split_ws(std::string_view s)
{
    std::vector<std::string_view> out;
    size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i])))
            ++i;
        size_t j = i;
        while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j])))
            ++j;
        if (j > i)
            out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

std::string lower(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

// Orientation of (a, b, c) in the lon/lat plane.
double cross(const GeoPoint& a, const GeoPoint& b, const GeoPoint& c)
{
    return (b.lon - a.lon) * (c.lat - a.lat) - (b.lat - a.lat) * (c.lon - a.lon);
}

constexpr double kEdgeEps = 1e-12;

bool on_segment(const GeoPoint& a, const GeoPoint& b, const GeoPoint& q)
{
    if (std::abs(cross(a, b, q)) > kEdgeEps)
        return false;
    return q.lon >= std::min(a.lon, b.lon) - kEdgeEps && q.lon <= std::max(a.lon, b.lon) + kEdgeEps &&
           q.lat >= std::min(a.lat, b.lat) - kEdgeEps && q.lat <= std::max(a.lat, b.lat) + kEdgeEps;
}

bool segments_intersect(const GeoPoint& p1, const GeoPoint& p2, const GeoPoint& q1, const GeoPoint& q2)
{
    double d1 = cross(q1, q2, p1);
    double d2 = cross(q1, q2, p2);
    double d3 = cross(p1, p2, q1);
    double d4 = cross(p1, p2, q2);
    if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
        return true;
    return on_segment(q1, q2, p1) || on_segment(q1, q2, p2) || on_segment(p1, p2, q1) ||
           on_segment(p1, p2, q2);
}

// Proper crossing only: touching at an endpoint or running along an edge does not count.
bool segments_cross(const GeoPoint& p1, const GeoPoint& p2, const GeoPoint& q1, const GeoPoint& q2)
{
    double d1 = cross(q1, q2, p1);
    double d2 = cross(q1, q2, p2);
    double d3 = cross(p1, p2, q1);
    double d4 = cross(p1, p2, q2);
    return ((d1 > kEdgeEps && d2 < -kEdgeEps) || (d1 < -kEdgeEps && d2 > kEdgeEps)) &&
           ((d3 > kEdgeEps && d4 < -kEdgeEps) || (d3 < -kEdgeEps && d4 > kEdgeEps));
}

} // namespace

void validate(const GeoPoint& p)
{
    if (!(p.lat >= -90.0 && p.lat <= 90.0))
        throw InvariantViolation("latitude out of range: " + format_double(p.lat));
    if (!(p.lon >= -180.0 && p.lon <= 180.0))
        throw InvariantViolation("longitude out of range: " + format_double(p.lon));
    if (!(p.alt_agl_m >= 0.0))
        throw InvariantViolation("negative altitude: " + format_double(p.alt_agl_m));
}

double haversine_m(const GeoPoint& a, const GeoPoint& b)
{
    double phi1 = a.lat * kDegToRad;
    double phi2 = b.lat * kDegToRad;
    double dphi = (b.lat - a.lat) * kDegToRad;
    double dlambda = (b.lon - a.lon) * kDegToRad;
    double s1 = std::sin(dphi / 2.0);
    double s2 = std::sin(dlambda / 2.0);
    double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
    h = std::clamp(h, 0.0, 1.0);
    return 2.0 * kEarthRadiusM * std::asin(std::sqrt(h));
}

double distance_3d_m(const GeoPoint& a, const GeoPoint& b)
{
    double h = haversine_m(a, b);
    double v = a.alt_agl_m - b.alt_agl_m;
    return std::sqrt(h * h + v * v);
}

GeoPoint offset_by(const GeoPoint& p, double east_m, double north_m, double up_m)
{
    GeoPoint out = p;
    out.lat = p.lat + north_m / kEarthRadiusM / kDegToRad;
    out.lon = p.lon + east_m / (kEarthRadiusM * std::cos(p.lat * kDegToRad)) / kDegToRad;
    out.alt_agl_m = std::max(0.0, p.alt_agl_m + up_m);
    return out;
}

GeoPoint step_toward(const GeoPoint& from, const GeoPoint& to, double max_step_m)
{
    double dist = haversine_m(from, to);
    GeoPoint out = from;
    if (dist <= max_step_m) {
        out.lat = to.lat;
        out.lon = to.lon;
        return out;
    }
    double f = max_step_m / dist;
    out.lat = from.lat + (to.lat - from.lat) * f;
    out.lon = from.lon + (to.lon - from.lon) * f;
    return out;
}

ElevationRaster::ElevationRaster(int ncols, int nrows, double xll, double yll, double cellsize,
                                 double nodata, std::vector<double> values)
    : ncols_(ncols), nrows_(nrows), xll_(xll), yll_(yll), cellsize_(cellsize), nodata_(nodata),
      values_(std::move(values))
{
    if (ncols_ <= 0 || nrows_ <= 0)
        throw InvariantViolation("raster dimensions must be positive");
    if (!(cellsize_ > 0.0))
        throw InvariantViolation("cellsize must be positive");
    if (values_.size() != static_cast<size_t>(ncols_) * static_cast<size_t>(nrows_))
        throw InvariantViolation("raster value count does not match ncols*nrows");
    for (double v : values_)
        if (v != nodata_ && !std::isfinite(v))
            throw InvariantViolation("non-finite raster value");
}

bool ElevationRaster::contains(double lat, double lon) const noexcept
{
    return lon >= xll_ && lon <= xll_ + ncols_ * cellsize_ && lat >= yll_ &&
           lat <= yll_ + nrows_ * cellsize_;
}

double ground_height_at(const ElevationRaster& r, double lat, double lon)
{
    if (!r.contains(lat, lon))
        throw OutOfBounds("point outside raster extent");

    // Continuous node coordinates, column from the west and row from the south.
    double fx = std::clamp((lon - r.xll()) / r.cellsize() - 0.5, 0.0, double(r.ncols() - 1));
    double fy = std::clamp((lat - r.yll()) / r.cellsize() - 0.5, 0.0, double(r.nrows() - 1));

    int c0 = std::min(static_cast<int>(std::floor(fx)), std::max(r.ncols() - 2, 0));
    int s0 = std::min(static_cast<int>(std::floor(fy)), std::max(r.nrows() - 2, 0));
    int c1 = std::min(c0 + 1, r.ncols() - 1);
    int s1 = std::min(s0 + 1, r.nrows() - 1);
    double tx = fx - c0;
    double ty = fy - s0;

    auto row_of = [&](int from_south) { return r.nrows() - 1 - from_south; };
    double v00 = r.at(row_of(s0), c0);
    double v10 = r.at(row_of(s0), c1);
    double v01 = r.at(row_of(s1), c0);
    double v11 = r.at(row_of(s1), c1);
    for (double v : {v00, v10, v01, v11})
        if (r.is_nodata(v))
            throw NoData("nodata cell adjacent to query point");

    double south = v00 + (v10 - v00) * tx;
    double north = v01 + (v11 - v01) * tx;
    return south + (north - south) * ty;
}

ElevationRaster load_raster(std::string_view text)
{
    static constexpr std::string_view kKeys[] = {"ncols",     "nrows",    "xllcorner",
                                                  "yllcorner", "cellsize", "nodata_value"};
    double header[6] = {};
    int line_no = 0;
    size_t pos = 0;

    auto next_line = [&](std::string_view& out) {
        if (pos >= text.size())
            return false;
        size_t end = text.find('\n', pos);
        if (end == std::string_view::npos)
            end = text.size();
        out = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        return true;
    };

    std::string_view line;
    for (int k = 0; k < 6; ++k) {
        if (!next_line(line))
            throw ParseError("missing header line '" + std::string(kKeys[k]) + "'", line_no + 1);
        auto toks = split_ws(line);
        if (toks.size() != 2 || lower(toks[0]) != kKeys[k])
            throw ParseError("expected '" + std::string(kKeys[k]) + " <value>'", line_no);
        header[k] = parse_double(toks[1], line_no);
    }

    double ncols_d = header[0];
    double nrows_d = header[1];
    if (ncols_d != std::floor(ncols_d) || nrows_d != std::floor(nrows_d) || ncols_d < 1 || nrows_d < 1)
        throw ParseError("ncols/nrows must be positive integers", 2);
    int ncols = static_cast<int>(ncols_d);
    int nrows = static_cast<int>(nrows_d);

    std::vector<double> values;
    values.reserve(static_cast<size_t>(ncols) * nrows);
    int rows_read = 0;
    while (next_line(line)) {
        auto toks = split_ws(line);
        if (toks.empty())
            continue;
        if (rows_read >= nrows)
            throw ParseError("more data rows than nrows", line_no);
        if (static_cast<int>(toks.size()) != ncols)
            throw ParseError("row has " + std::to_string(toks.size()) + " values, expected " +
                                 std::to_string(ncols),
                             line_no);
        for (auto t : toks)
            values.push_back(parse_double(t, line_no));
        ++rows_read;
    }
    if (rows_read != nrows)
        throw ParseError("expected " + std::to_string(nrows) + " data rows, found " +
                             std::to_string(rows_read),
                         line_no);

    return ElevationRaster(ncols, nrows, header[2], header[3], header[4], header[5], std::move(values));
}

std::string emit_raster(const ElevationRaster& r)
{
    std::string out;
    out += "ncols " + std::to_string(r.ncols()) + "\n";
    out += "nrows " + std::to_string(r.nrows()) + "\n";
    out += "xllcorner " + format_double(r.xll()) + "\n";
    out += "yllcorner " + format_double(r.yll()) + "\n";
    out += "cellsize " + format_double(r.cellsize()) + "\n";
    out += "NODATA_value " + format_double(r.nodata()) + "\n";
    for (int row = 0; row < r.nrows(); ++row) {
        for (int col = 0; col < r.ncols(); ++col) {
            if (col)
                out += ' ';
            out += format_double(r.at(row, col));
        }
        out += '\n';
    }
    return out;
}

BoundaryPolygon::BoundaryPolygon(std::vector<GeoPoint> vertices) : vertices_(std::move(vertices))
{
    const size_t n = vertices_.size();
    if (n < 3)
        throw InvariantViolation("boundary polygon needs at least 3 vertices");
    for (const auto& v : vertices_)
        validate(GeoPoint{v.lat, v.lon, 0.0});
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
            bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if (adjacent)
                continue;
            if (segments_intersect(vertices_[i], vertices_[(i + 1) % n], vertices_[j],
                                   vertices_[(j + 1) % n]))
                throw InvariantViolation("boundary polygon is self-intersecting");
        }
    }
}

GeoPoint BoundaryPolygon::centroid() const
{
    GeoPoint c;
    for (const auto& v : vertices_) {
        c.lat += v.lat;
        c.lon += v.lon;
    }
    c.lat /= static_cast<double>(vertices_.size());
    c.lon /= static_cast<double>(vertices_.size());
    return c;
}

bool point_in_polygon(const BoundaryPolygon& poly, const GeoPoint& q)
{
    const auto& v = poly.vertices();
    const size_t n = v.size();
    for (size_t i = 0; i < n; ++i)
        if (on_segment(v[i], v[(i + 1) % n], q))
            return true;

    bool inside = false;
    for (size_t i = 0, j = n - 1; i < n; j = i++) {
        if ((v[i].lat > q.lat) != (v[j].lat > q.lat)) {
            double x = v[j].lon + (q.lat - v[j].lat) * (v[i].lon - v[j].lon) / (v[i].lat - v[j].lat);
            if (q.lon < x)
                inside = !inside;
        }
    }
    return inside;
}

bool segment_in_polygon(const BoundaryPolygon& poly, const GeoPoint& a, const GeoPoint& b)
{
    if (!point_in_polygon(poly, a) || !point_in_polygon(poly, b))
        return false;
    const auto& v = poly.vertices();
    const size_t n = v.size();
    for (size_t i = 0; i < n; ++i)
        if (segments_cross(a, b, v[i], v[(i + 1) % n]))
            return false;
    // A segment can graze a reflex vertex without properly crossing an edge.
    constexpr int kSamples = 64;
    for (int k = 1; k < kSamples; ++k) {
        double f = static_cast<double>(k) / kSamples;
        GeoPoint m{a.lat + (b.lat - a.lat) * f, a.lon + (b.lon - a.lon) * f, 0.0};
        if (!point_in_polygon(poly, m))
            return false;
    }
    return true;
}

} // namespace agritag::geo
