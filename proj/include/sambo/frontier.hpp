// Copyright 2026 The sambo Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Frontier search: minimize a monotone objective s(z) subject to a monotone
// constraint c(z) >= threshold over a 2-D box, where z = (-log10 l, log10 nu).
//
// Safe queries (Q^u) rule out everything that dominates them; unsafe queries
// (Q^l) rule out everything they dominate. The two staircases bound the
// region Gamma that may still contain the optimum, and the max-min distance
// from Gamma to the upper staircase bounds the sub-optimality of the best
// safe query.

#ifndef SAMBO_FRONTIER_HPP
#define SAMBO_FRONTIER_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <tuple>
#include <utility>
#include <vector>

#include <sambo/common.hpp>

namespace sambo {

struct Point2 {
    double z1 = 0.0;
    double z2 = 0.0;

    friend bool operator==(const Point2&, const Point2&) = default;
    friend auto operator<=>(const Point2& a, const Point2& b) { return std::tie(a.z1, a.z2) <=> std::tie(b.z1, b.z2); }
};

/// Componentwise a >= b.
inline bool dominates(const Point2& a, const Point2& b) { return a.z1 >= b.z1 && a.z2 >= b.z2; }

inline double distance(const Point2& a, const Point2& b) { return std::hypot(a.z1 - b.z1, a.z2 - b.z2); }

/// (l, nu) -> (-log10 l, log10 nu)
inline Point2 log_transform(double lengthscale, double variance)
{
    if (!(lengthscale > 0.0) || !(variance > 0.0))
        throw DomainError("log_transform: lengthscale and variance must be positive");
    return {-std::log10(lengthscale), std::log10(variance)};
}

/// z -> (l, nu)
inline std::pair<double, double> inverse_transform(const Point2& z)
{
    return {std::pow(10.0, -z.z1), std::pow(10.0, z.z2)};
}

struct SearchBounds {
    Point2 lower; // z^l
    Point2 upper; // z^u

    void validate() const
    {
        if (!(lower.z1 < upper.z1) || !(lower.z2 < upper.z2))
            throw DomainError("frontier search: bounds must satisfy z^l < z^u componentwise");
    }

    bool contains(const Point2& z, double tol = 0.0) const
    {
        return z.z1 >= lower.z1 - tol && z.z1 <= upper.z1 + tol && z.z2 >= lower.z2 - tol && z.z2 <= upper.z2 + tol;
    }

    /// Search box for l in [l_lo, l_hi] and nu in [nu_lo, nu_hi].
    static SearchBounds from_hyperparameters(double l_lo, double l_hi, double nu_lo, double nu_hi)
    {
        SearchBounds b{log_transform(l_hi, nu_lo), log_transform(l_lo, nu_hi)};
        b.validate();
        return b;
    }
};

struct SearchPoint {
    Point2 z;
    std::optional<double> s_value;
    std::optional<double> c_value;
};

enum class Side { upper, lower };

/// Adds `p` to an antichain. Upper sets keep minimal elements, lower sets
/// keep maximal elements; a point already covered by the set is not added.
/// Returns whether `p` was inserted.
inline bool prune_insert(std::vector<SearchPoint>& Q, const SearchPoint& p, Side side)
{
    const auto covers = [side](const Point2& a, const Point2& b) {
        return side == Side::upper ? dominates(a, b) : dominates(b, a);
    };
    for (const auto& q : Q)
        if (covers(p.z, q.z))
            return false;
    std::erase_if(Q, [&](const SearchPoint& q) { return covers(q.z, p.z); });
    Q.push_back(p);
    std::sort(Q.begin(), Q.end(), [](const SearchPoint& a, const SearchPoint& b) { return a.z < b.z; });
    return true;
}

struct FrontierState {
    SearchBounds bounds;
    std::vector<SearchPoint> upper; // Q^u, sorted by z1
    std::vector<SearchPoint> lower; // Q^l, sorted by z1
    int iteration = 0;

    static FrontierState initial(const SearchBounds& b)
    {
        b.validate();
        return {b, {{b.upper, {}, {}}}, {{b.lower, {}, {}}}, 0};
    }
};

// Staircase functions. Empty min/max sets clamp to the domain boundary.
// They define b^l and b^r; frontier membership and distances use the
// staircase segments below.

inline double upper_f2(double z1, const std::vector<SearchPoint>& Qu, const SearchBounds& b)
{
    double v = b.upper.z2;
    bool any = false;
    for (const auto& q : Qu)
        if (z1 >= q.z.z1) {
            v = any ? std::min(v, q.z.z2) : q.z.z2;
            any = true;
        }
    return v;
}

inline double upper_f1(double z2, const std::vector<SearchPoint>& Qu, const SearchBounds& b)
{
    double v = b.upper.z1;
    bool any = false;
    for (const auto& q : Qu)
        if (z2 >= q.z.z2) {
            v = any ? std::min(v, q.z.z1) : q.z.z1;
            any = true;
        }
    return v;
}

inline double lower_f2(double z1, const std::vector<SearchPoint>& Ql, const SearchBounds& b)
{
    double v = b.lower.z2;
    bool any = false;
    for (const auto& q : Ql)
        if (z1 <= q.z.z1) {
            v = any ? std::max(v, q.z.z2) : q.z.z2;
            any = true;
        }
    return v;
}

inline double lower_f1(double z2, const std::vector<SearchPoint>& Ql, const SearchBounds& b)
{
    double v = b.lower.z1;
    bool any = false;
    for (const auto& q : Ql)
        if (z2 <= q.z.z2) {
            v = any ? std::max(v, q.z.z1) : q.z.z1;
            any = true;
        }
    return v;
}

constexpr double frontier_tol = 1e-12;

/// Axis-aligned segment of a staircase.
struct Segment {
    Point2 a;
    Point2 b;

    double distance_to(const Point2& p) const
    {
        const double dx = b.z1 - a.z1, dy = b.z2 - a.z2;
        const double len2 = dx * dx + dy * dy;
        double t = len2 > 0.0 ? ((p.z1 - a.z1) * dx + (p.z2 - a.z2) * dy) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        return distance(p, {a.z1 + t * dx, a.z2 + t * dy});
    }
};

inline double distance_to_segments(const Point2& p, const std::vector<Segment>& segs)
{
    double d = std::numeric_limits<double>::infinity();
    for (const auto& s : segs)
        d = std::min(d, s.distance_to(p));
    return d;
}

/// F^u as a polyline of alternating vertical/horizontal steps through the
/// upper queries. Only points dominating some upper query belong to it: the
/// clamped parts of the box boundary left of and below the staircase are not
/// frontier points, since they need not be worse than the best safe query.
inline std::vector<Segment> upper_frontier_segments(const std::vector<SearchPoint>& Qu, const SearchBounds& b)
{
    std::vector<Point2> q;
    for (const auto& p : Qu)
        q.push_back(p.z);
    std::sort(q.begin(), q.end());
    std::vector<Segment> out;
    for (std::size_t k = 0; k < q.size(); ++k) {
        const double top = k == 0 ? b.upper.z2 : q[k - 1].z2;
        const double right = k + 1 < q.size() ? q[k + 1].z1 : b.upper.z1;
        out.push_back({q[k], {q[k].z1, top}});
        out.push_back({q[k], {right, q[k].z2}});
    }
    return out;
}

/// F^l, the mirror image: steps through the lower queries down to the bottom
/// edge and left to the left edge.
inline std::vector<Segment> lower_frontier_segments(const std::vector<SearchPoint>& Ql, const SearchBounds& b)
{
    std::vector<Point2> p;
    for (const auto& q : Ql)
        p.push_back(q.z);
    std::sort(p.begin(), p.end());
    std::vector<Segment> out;
    for (std::size_t k = 0; k < p.size(); ++k) {
        const double left = k == 0 ? b.lower.z1 : p[k - 1].z1;
        const double bottom = k + 1 < p.size() ? p[k + 1].z2 : b.lower.z2;
        out.push_back({{left, p[k].z2}, p[k]});
        out.push_back({{p[k].z1, bottom}, p[k]});
    }
    return out;
}

inline bool on_upper_frontier(const Point2& z, const std::vector<SearchPoint>& Qu, const SearchBounds& b,
                              double tol = frontier_tol)
{
    return distance_to_segments(z, upper_frontier_segments(Qu, b)) <= tol;
}

inline bool on_lower_frontier(const Point2& z, const std::vector<SearchPoint>& Ql, const SearchBounds& b,
                              double tol = frontier_tol)
{
    return distance_to_segments(z, lower_frontier_segments(Ql, b)) <= tol;
}

/// Not yet ruled out: inside the box, not below-or-equal to an unsafe query
/// and not strictly above a safe one.
inline bool plausible(const Point2& z, const std::vector<SearchPoint>& Ql, const std::vector<SearchPoint>& Qu,
                      const SearchBounds& b)
{
    if (!b.contains(z))
        return false;
    for (const auto& p : Ql)
        if (dominates(p.z, z))
            return false;
    for (const auto& q : Qu)
        if (z.z1 > q.z.z1 && z.z2 > q.z.z2)
            return false;
    return true;
}

/// Gamma, the closure of the plausible set. Every boundary line through z is
/// axis-aligned, so z is in the closure iff one of its eight axis and
/// diagonal neighbours at a tiny offset is plausible.
inline bool in_gamma(const Point2& z, const std::vector<SearchPoint>& Ql, const std::vector<SearchPoint>& Qu,
                     const SearchBounds& b)
{
    const double h = 1e-10 * std::max(b.upper.z1 - b.lower.z1, b.upper.z2 - b.lower.z2);
    for (int i = -1; i <= 1; ++i)
        for (int j = -1; j <= 1; ++j)
            if (plausible({z.z1 + i * h, z.z2 + j * h}, Ql, Qu, b))
                return true;
    return false;
}

inline bool in_gamma(const Point2& z, const FrontierState& s) { return in_gamma(z, s.lower, s.upper, s.bounds); }

/// (b^l, b^r): where the lower frontier meets the top and right domain edges.
inline std::pair<Point2, Point2> lower_boundary_points(const std::vector<SearchPoint>& Ql, const SearchBounds& b)
{
    return {{lower_f1(b.upper.z2, Ql, b), b.upper.z2}, {b.upper.z1, lower_f2(b.upper.z1, Ql, b)}};
}

namespace detail {

inline void push_unique(std::vector<Point2>& v, const Point2& p)
{
    for (const auto& q : v)
        if (std::abs(q.z1 - p.z1) <= frontier_tol && std::abs(q.z2 - p.z2) <= frontier_tol)
            return;
    v.push_back(p);
}

inline void sort_staircase(std::vector<Point2>& v)
{
    std::sort(v.begin(), v.end(), [](const Point2& a, const Point2& b) {
        return a.z1 != b.z1 ? a.z1 < b.z1 : a.z2 > b.z2;
    });
}

} // namespace detail

/// Outer corner points of Gamma: the reflex corners of the lower staircase
/// plus b^l and b^r, restricted to Gamma.
inline std::vector<Point2> outer_corners(const std::vector<SearchPoint>& Ql, const SearchBounds& b,
                                         const std::vector<SearchPoint>& Qu)
{
    const auto [bl, br] = lower_boundary_points(Ql, b);
    std::vector<Point2> seq{bl, br};
    for (const auto& p : Ql)
        seq.push_back(p.z);
    detail::sort_staircase(seq);
    std::vector<Point2> cand;
    for (std::size_t k = 1; k < seq.size(); ++k)
        cand.push_back({seq[k - 1].z1, seq[k].z2});
    cand.push_back(bl);
    cand.push_back(br);
    std::vector<Point2> out;
    for (const auto& c : cand)
        if (in_gamma(c, Ql, Qu, b))
            detail::push_unique(out, c);
    std::sort(out.begin(), out.end());
    return out;
}

inline std::vector<Point2> outer_corners(const FrontierState& s) { return outer_corners(s.lower, s.bounds, s.upper); }

/// Corner points of F^u: the upper queries, the reflex corners of the upper
/// staircase (including where it meets the top and right edges), and b^l,
/// b^r when they lie on F^u.
inline std::vector<Point2> upper_frontier_corners(const std::vector<SearchPoint>& Qu,
                                                  const std::vector<SearchPoint>& Ql, const SearchBounds& b)
{
    std::vector<Point2> seq;
    for (const auto& q : Qu)
        seq.push_back(q.z);
    detail::sort_staircase(seq);
    if (!seq.empty()) {
        seq.insert(seq.begin(), Point2{seq.front().z1, b.upper.z2});
        seq.push_back({b.upper.z1, seq.back().z2});
    }
    std::vector<Point2> out;
    for (const auto& q : Qu)
        detail::push_unique(out, q.z);
    for (std::size_t k = 1; k < seq.size(); ++k)
        detail::push_unique(out, {seq[k].z1, seq[k - 1].z2});
    const auto [bl, br] = lower_boundary_points(Ql, b);
    for (const auto& p : {bl, br})
        if (on_upper_frontier(p, Qu, b))
            detail::push_unique(out, p);
    std::sort(out.begin(), out.end());
    return out;
}

/// d(Gamma, F^u) evaluated over the outer corners of Gamma.
inline double max_min_distance(const FrontierState& s)
{
    const auto segs = upper_frontier_segments(s.upper, s.bounds);
    double d = 0.0;
    for (const auto& c : outer_corners(s))
        d = std::max(d, distance_to_segments(c, segs));
    return d;
}

struct Rect {
    double lo1, hi1, lo2, hi2;

    static Rect spanning(const Point2& a, const Point2& b)
    {
        return {std::min(a.z1, b.z1), std::max(a.z1, b.z1), std::min(a.z2, b.z2), std::max(a.z2, b.z2)};
    }

    bool contains(const Point2& p, double tol = frontier_tol) const
    {
        return p.z1 >= lo1 - tol && p.z1 <= hi1 + tol && p.z2 >= lo2 - tol && p.z2 <= hi2 + tol;
    }
};

/// Clips axis-aligned segments to a rectangle.
inline std::vector<Segment> clip_segments(const std::vector<Segment>& segs, const Rect& r)
{
    std::vector<Segment> out;
    for (const auto& s : segs) {
        const double x0 = std::max(std::min(s.a.z1, s.b.z1), r.lo1);
        const double x1 = std::min(std::max(s.a.z1, s.b.z1), r.hi1);
        const double y0 = std::max(std::min(s.a.z2, s.b.z2), r.lo2);
        const double y1 = std::min(std::max(s.a.z2, s.b.z2), r.hi2);
        if (x0 <= x1 + frontier_tol && y0 <= y1 + frontier_tol)
            out.push_back({{x0, y0}, {std::max(x0, x1), std::max(y0, y1)}});
    }
    return out;
}

/// Max-min distance between Gamma and F^u, both restricted to the rectangle.
/// Candidate points are the cross product of all staircase and rectangle
/// breakpoint coordinates that fall in Gamma and the rectangle.
inline double rect_max_min_distance(const std::vector<SearchPoint>& Ql, const std::vector<SearchPoint>& Qu,
                                    const SearchBounds& b, const Rect& r)
{
    const auto segs = clip_segments(upper_frontier_segments(Qu, b), r);
    std::vector<double> xs{r.lo1, r.hi1}, ys{r.lo2, r.hi2};
    for (const auto* Q : {&Ql, &Qu})
        for (const auto& p : *Q) {
            if (p.z.z1 > r.lo1 && p.z.z1 < r.hi1)
                xs.push_back(p.z.z1);
            if (p.z.z2 > r.lo2 && p.z.z2 < r.hi2)
                ys.push_back(p.z.z2);
        }
    double d = 0.0;
    for (double x : xs)
        for (double y : ys) {
            const Point2 p{x, y};
            if (in_gamma(p, Ql, Qu, b))
                d = std::max(d, distance_to_segments(p, segs));
        }
    return d;
}

struct MaxMinRect {
    Point2 corner_lo; // from the outer corners of Gamma
    Point2 corner_hi; // from the corners of F^u
    double maxmin_distance = 0.0;
};

namespace detail {

inline bool condition_three(const Point2& z, const Point2& zp, const std::vector<SearchPoint>& Qu)
{
    for (const auto& q : Qu) {
        const Point2& t = q.z;
        if (z.z1 < t.z1 && t.z1 < zp.z1 && std::abs(zp.z2 - t.z2) <= frontier_tol)
            return false;
        if (z.z2 < t.z2 && t.z2 < zp.z2 && std::abs(zp.z1 - t.z1) <= frontier_tol)
            return false;
    }
    return true;
}

inline bool lex_less(const Point2& a, const Point2& b, const Point2& c, const Point2& d)
{
    return std::tie(a.z1, a.z2, b.z1, b.z2) < std::tie(c.z1, c.z2, d.z1, d.z2);
}

} // namespace detail

/// Whether (z, z') satisfies the three admissibility conditions.
inline bool admissible_rect(const Point2& z, const Point2& zp, const FrontierState& s)
{
    const bool inside = in_gamma({z.z1, zp.z2}, s) && in_gamma({zp.z1, z.z2}, s);
    const bool area = std::abs(z.z1 - zp.z1) * std::abs(z.z2 - zp.z2) > 0.0;
    return inside && area && detail::condition_three(z, zp, s.upper);
}

/// Rectangle between an outer corner of Gamma and a corner of F^u with the
/// largest restricted max-min distance. Ties go to the lexicographically
/// smallest (z, z'). Empty when no admissible rectangle has positive area.
inline std::optional<MaxMinRect> largest_max_min_rect(const FrontierState& s)
{
    std::optional<MaxMinRect> best;
    const auto lows = outer_corners(s);
    const auto highs = upper_frontier_corners(s.upper, s.lower, s.bounds);
    for (const auto& z : lows)
        for (const auto& zp : highs) {
            if (!admissible_rect(z, zp, s))
                continue;
            const double d = rect_max_min_distance(s.lower, s.upper, s.bounds, Rect::spanning(z, zp));
            if (!best || d > best->maxmin_distance + frontier_tol
                || (d >= best->maxmin_distance - frontier_tol
                    && detail::lex_less(z, zp, best->corner_lo, best->corner_hi)))
                best = MaxMinRect{z, zp, d};
        }
    return best;
}

/// Center, middle of the right side, middle of the upper side.
inline std::vector<Point2> query_candidates(const MaxMinRect& rect)
{
    const Point2& z = rect.corner_lo;
    const Point2& zp = rect.corner_hi;
    return {{0.5 * z.z1 + 0.5 * zp.z1, 0.5 * z.z2 + 0.5 * zp.z2},
            {zp.z1, 0.5 * z.z2 + 0.5 * zp.z2},
            {0.5 * z.z1 + 0.5 * zp.z1, zp.z2}};
}

/// Worst case over the two possible outcomes of querying zq.
inline double worst_case_distance(const Point2& zq, const MaxMinRect& rect, const FrontierState& s)
{
    const Rect r = Rect::spanning(rect.corner_lo, rect.corner_hi);
    auto lower = s.lower;
    prune_insert(lower, {zq, {}, {}}, Side::lower);
    auto upper = s.upper;
    prune_insert(upper, {zq, {}, {}}, Side::upper);
    return std::max(rect_max_min_distance(lower, s.upper, s.bounds, r),
                    rect_max_min_distance(s.lower, upper, s.bounds, r));
}

/// Candidate not on either frontier with the smallest worst-case distance;
/// ties go to the lexicographically smallest point.
inline std::optional<Point2> best_worst_case_query(const MaxMinRect& rect, const FrontierState& s)
{
    std::optional<Point2> best;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& zq : query_candidates(rect)) {
        if (on_upper_frontier(zq, s.upper, s.bounds) || on_lower_frontier(zq, s.lower, s.bounds))
            continue;
        const double d = worst_case_distance(zq, rect, s);
        if (!best || d < best_d - frontier_tol || (d <= best_d + frontier_tol && zq < *best)) {
            best = zq;
            best_d = std::min(best_d, d);
        }
    }
    return best;
}

struct FrontierTraceRecord {
    int k = 0;
    Point2 zq;
    double s = 0.0;
    double c = 0.0;
    bool safe = false;
    double d = 0.0; // max-min distance after the update
    Point2 best;
    double best_s = 0.0;
};

struct FrontierResult {
    SearchPoint best;
    FrontierState state;
    std::vector<FrontierTraceRecord> trace;
    double initial_distance = 0.0;
    bool converged = false; // stopped early because no admissible query remained
};

/// (s, c) at z.
using FrontierOracle = std::function<std::pair<double, double>(const Point2&)>;

inline const SearchPoint& best_upper(const std::vector<SearchPoint>& Qu)
{
    const SearchPoint* best = &Qu.front();
    for (const auto& q : Qu)
        if (*q.s_value < *best->s_value)
            best = &q;
    return *best;
}

/// Runs K iterations. Both box corners are evaluated first to validate the
/// bounds; those evaluations do not count towards K.
inline FrontierResult frontier_search(const FrontierOracle& oracle, const SearchBounds& bounds, double threshold,
                                      int K = 20)
{
    bounds.validate();
    const auto [su, cu] = oracle(bounds.upper);
    const auto [sl, cl] = oracle(bounds.lower);
    if (!(cu >= threshold))
        throw DomainError("frontier search: constraint not met at the upper corner; widen the bounds");
    if (cl >= threshold)
        throw DomainError("frontier search: constraint already met at the lower corner; widen the bounds");

    FrontierResult res;
    res.state = FrontierState::initial(bounds);
    res.state.upper.front().s_value = su;
    res.state.upper.front().c_value = cu;
    res.state.lower.front().s_value = sl;
    res.state.lower.front().c_value = cl;
    res.initial_distance = max_min_distance(res.state);

    for (int k = 1; k <= K; ++k) {
        const auto rect = largest_max_min_rect(res.state);
        if (!rect) {
            res.converged = true;
            break;
        }
        const auto zq = best_worst_case_query(*rect, res.state);
        if (!zq) {
            res.converged = true;
            break;
        }
        const auto [s, c] = oracle(*zq);
        const bool safe = c >= threshold;
        prune_insert(safe ? res.state.upper : res.state.lower, {*zq, s, c}, safe ? Side::upper : Side::lower);
        res.state.iteration = k;
        const auto& b = best_upper(res.state.upper);
        res.trace.push_back({k, *zq, s, c, safe, max_min_distance(res.state), b.z, *b.s_value});
    }
    res.best = best_upper(res.state.upper);
    return res;
}

} // namespace sambo

#endif
