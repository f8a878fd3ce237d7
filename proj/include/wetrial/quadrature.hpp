#pragma once

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

namespace wetrial {

class QuadratureError : public std::runtime_error {
public:
    QuadratureError(double achieved, double requested)
        : std::runtime_error("adaptive quadrature did not converge: achieved error " +
                             std::to_string(achieved) + ", requested " + std::to_string(requested)),
          achieved_(achieved) {}
    double achieved() const noexcept { return achieved_; }

private:
    double achieved_;
};

namespace detail {

struct Segment {
    double a, b, value, error;
    bool operator<(const Segment& o) const { return error < o.error; }
};

// One Gauss-Kronrod 7/15 panel; error estimate is |K15 - G7|.
template <class F>
Segment gk15(F& f, double a, double b) {
    static constexpr double xgk[8] = {
        0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
        0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
        0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
        0.207784955007898467600689403773245, 0.0};
    static constexpr double wgk[8] = {
        0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
        0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
        0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
        0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
    static constexpr double wg[4] = {0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                                     0.381830050505118944950369775488975, 0.417959183673469387755102040816327};
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    const double fc = f(c);
    double kron = fc * wgk[7];
    double gauss = fc * wg[3];
    for (int i = 0; i < 7; ++i) {
        const double dx = h * xgk[i];
        const double s = f(c - dx) + f(c + dx);
        kron += wgk[i] * s;
        if (i % 2 == 1) gauss += wg[i / 2] * s;
    }
    return {a, b, kron * h, std::abs((kron - gauss) * h)};
}

}  // namespace detail

// Adaptive Gauss-Kronrod integration of f over the consecutive panels given by
// `breaks` (ascending). Bisects the worst panel until the summed error estimate
// falls under abs_tol; throws QuadratureError after max_panels.
template <class F>
double integrate_adaptive(F&& f, const std::vector<double>& breaks, double abs_tol, int max_panels = 400) {
    std::priority_queue<detail::Segment> heap;
    double total = 0.0, err = 0.0;
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
        if (!(breaks[i + 1] > breaks[i])) continue;
        auto s = detail::gk15(f, breaks[i], breaks[i + 1]);
        total += s.value;
        err += s.error;
        heap.push(s);
    }
    int panels = static_cast<int>(heap.size());
    while (err > abs_tol) {
        if (panels >= max_panels) throw QuadratureError(err, abs_tol);
        auto worst = heap.top();
        heap.pop();
        const double mid = 0.5 * (worst.a + worst.b);
        auto left = detail::gk15(f, worst.a, mid);
        auto right = detail::gk15(f, mid, worst.b);
        total += left.value + right.value - worst.value;
        err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        ++panels;
    }
    // Re-sum to shed the drift of incremental updates.
    double sum = 0.0;
    while (!heap.empty()) {
        sum += heap.top().value;
        heap.pop();
    }
    return sum;
}

}  // namespace wetrial
