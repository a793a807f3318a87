// Measured trajectory data, CSV ingestion, and platoon construction.

#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cfcal/core.hpp"

namespace cfcal {

enum class UnitSystem { FeetSeconds, MetersSeconds };

inline std::string to_string(UnitSystem u) {
    return u == UnitSystem::FeetSeconds ? "feet+seconds" : "meters+seconds";
}

inline UnitSystem parse_units(std::string_view s) {
    if (s == "feet" || s == "ft" || s == "feet+seconds") return UnitSystem::FeetSeconds;
    if (s == "meters" || s == "m" || s == "meters+seconds") return UnitSystem::MetersSeconds;
    throw DataError("unknown unit system '" + std::string(s) + "'");
}

// One vehicle's measured time series on the shared grid. Arrays are indexed
// by frame - first_frame.
struct Trajectory {
    int vehicle_id{0};
    Frame first_frame{0};
    double dt{0.1};
    double length{15.0};
    std::vector<double> positions;
    std::vector<double> speeds;
    std::vector<int> leaders;
    std::vector<int> lanes;

    [[nodiscard]] std::size_t size() const noexcept { return positions.size(); }
    [[nodiscard]] Frame last_frame() const noexcept {
        return first_frame + static_cast<Frame>(positions.size()) - 1;
    }
    [[nodiscard]] double t_entry() const noexcept { return static_cast<double>(first_frame) * dt; }
    [[nodiscard]] double t_exit() const noexcept { return static_cast<double>(last_frame()) * dt; }
    [[nodiscard]] bool covers(Frame f) const noexcept { return f >= first_frame && f <= last_frame(); }
    [[nodiscard]] std::size_t index(Frame f) const noexcept {
        return static_cast<std::size_t>(f - first_frame);
    }
    [[nodiscard]] double position_at(Frame f) const { return positions[index(f)]; }
    [[nodiscard]] double speed_at(Frame f) const { return speeds[index(f)]; }
    [[nodiscard]] State state_at(Frame f) const { return {positions[index(f)], speeds[index(f)]}; }
    [[nodiscard]] int leader_at(Frame f) const { return leaders[index(f)]; }

    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

// Checks the per-trajectory invariants; v_max bounds the per-step displacement.
inline void validate(const Trajectory& t, double v_max = kInf) {
    const auto id = std::to_string(t.vehicle_id);
    if (t.positions.empty()) throw DataError("vehicle " + id + " has no samples");
    if (!(t.dt > 0.0)) throw DataError("vehicle " + id + ": dt must be positive");
    if (!(t.length > 0.0)) throw DataError("vehicle " + id + ": length must be positive");
    const auto n = t.positions.size();
    if (t.speeds.size() != n || t.leaders.size() != n || t.lanes.size() != n)
        throw DataError("vehicle " + id + ": series lengths differ");
    for (std::size_t k = 0; k < n; ++k) {
        if (!std::isfinite(t.positions[k]) || !std::isfinite(t.speeds[k]))
            throw DataError("vehicle " + id + ": non-finite sample");
        if (t.leaders[k] < 0) throw DataError("vehicle " + id + ": negative leader id");
        if (k > 0 && std::abs(t.positions[k] - t.positions[k - 1]) > v_max * t.dt)
            throw DataError("vehicle " + id + ": position jump exceeds v_max at t=" +
                            std::to_string(static_cast<double>(t.first_frame + static_cast<Frame>(k)) * t.dt));
    }
}

class TrajectorySet {
public:
    TrajectorySet() = default;
    explicit TrajectorySet(double dt, UnitSystem units = UnitSystem::FeetSeconds)
        : dt_(dt), units_(units) {}

    void add(Trajectory t) {
        if (t.vehicle_id <= 0) throw DataError("vehicle ids must be positive");
        if (std::abs(t.dt - dt_) > 1e-12 * dt_)
            throw DataError("vehicle " + std::to_string(t.vehicle_id) + " has a different dt");
        t.dt = dt_;
        validate(t);
        auto id = t.vehicle_id;
        if (!trajectories_.emplace(id, std::move(t)).second)
            throw DataError("duplicate vehicle id " + std::to_string(id));
    }

    // Replaces an existing trajectory (same id), keeping the set's dt.
    void replace(Trajectory t) {
        auto it = trajectories_.find(t.vehicle_id);
        if (it == trajectories_.end()) throw DataError("unknown vehicle " + std::to_string(t.vehicle_id));
        t.dt = dt_;
        validate(t);
        it->second = std::move(t);
    }

    [[nodiscard]] bool contains(int id) const { return trajectories_.count(id) != 0; }
    [[nodiscard]] const Trajectory& at(int id) const {
        auto it = trajectories_.find(id);
        if (it == trajectories_.end()) throw DataError("unknown vehicle " + std::to_string(id));
        return it->second;
    }
    [[nodiscard]] const Trajectory* find(int id) const {
        auto it = trajectories_.find(id);
        return it == trajectories_.end() ? nullptr : &it->second;
    }
    [[nodiscard]] std::vector<int> ids() const {
        std::vector<int> out;
        out.reserve(trajectories_.size());
        for (const auto& [id, _] : trajectories_) out.push_back(id);
        return out;
    }
    [[nodiscard]] std::size_t size() const noexcept { return trajectories_.size(); }
    [[nodiscard]] bool empty() const noexcept { return trajectories_.empty(); }
    [[nodiscard]] double dt() const noexcept { return dt_; }
    [[nodiscard]] UnitSystem units() const noexcept { return units_; }
    [[nodiscard]] const std::map<int, Trajectory>& trajectories() const noexcept { return trajectories_; }

    // Set when the source had no leader column and all leaders defaulted to 0.
    [[nodiscard]] bool leader_column_missing() const noexcept { return leader_column_missing_; }
    void set_leader_column_missing(bool v) noexcept { leader_column_missing_ = v; }

    friend bool operator==(const TrajectorySet& a, const TrajectorySet& b) {
        return a.dt_ == b.dt_ && a.units_ == b.units_ && a.trajectories_ == b.trajectories_;
    }

private:
    double dt_{0.1};
    UnitSystem units_{UnitSystem::FeetSeconds};
    std::map<int, Trajectory> trajectories_;
    bool leader_column_missing_{false};
};

// Column names of the CSV source. Empty optional columns mean "absent".
struct CsvSchema {
    std::string vehicle_id{"vehicle_id"};
    std::string time{"time"};
    std::string position{"position"};
    std::string speed{"speed"};
    std::string leader_id{"leader_id"};
    std::string length{"length"};
    std::string lane{"lane"};
    // When set, the time column holds integer frame indices and this is dt.
    std::optional<double> frame_dt;
    double default_length{15.0};
    double v_max{kInf};
};

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(',', start);
        auto field = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
        while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
        while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
            field.remove_suffix(1);
        out.push_back(field);
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline double parse_double(std::string_view s, std::size_t line_no) {
    try {
        std::size_t used = 0;
        std::string tmp(s);
        double v = std::stod(tmp, &used);
        if (used != tmp.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw DataError("line " + std::to_string(line_no) + ": cannot parse number '" + std::string(s) + "'");
    }
}

inline int parse_int(std::string_view s, std::size_t line_no) {
    double v = parse_double(s, line_no);
    if (v != std::floor(v)) throw DataError("line " + std::to_string(line_no) + ": expected an integer");
    return static_cast<int>(v);
}

// Rounds an inferred step to 12 significant digits so 0.09999999999999998
// read back from printed times becomes 0.1.
inline double tidy_dt(double dt) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", dt);
    return std::stod(buf);
}

struct Row {
    double time;
    double position;
    std::optional<double> speed;
    int leader;
    double length;
    int lane;
};

}  // namespace detail

inline TrajectorySet load_trajectories(std::istream& in, const CsvSchema& schema = {},
                                       UnitSystem units = UnitSystem::FeetSeconds) {
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        for (auto f : detail::split_csv(line)) header.emplace_back(f);
        break;
    }
    if (header.empty()) throw DataError("no records");

    auto column = [&](const std::string& name, bool required) -> int {
        if (name.empty()) {
            if (required) throw DataError("schema leaves a required column unnamed");
            return -1;
        }
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            if (required) throw DataError("missing required column '" + name + "'");
            return -1;
        }
        return static_cast<int>(it - header.begin());
    };
    const int c_id = column(schema.vehicle_id, true);
    const int c_time = column(schema.time, true);
    const int c_pos = column(schema.position, true);
    const int c_speed = column(schema.speed, false);
    const int c_leader = column(schema.leader_id, false);
    const int c_len = column(schema.length, false);
    const int c_lane = column(schema.lane, false);

    std::map<int, std::vector<detail::Row>> rows;
    std::size_t count = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto f = detail::split_csv(line);
        if (f.size() != header.size())
            throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                            " fields");
        detail::Row r{};
        const int id = detail::parse_int(f[c_id], line_no);
        if (id <= 0) throw DataError("line " + std::to_string(line_no) + ": vehicle ids must be positive");
        r.time = detail::parse_double(f[c_time], line_no);
        r.position = detail::parse_double(f[c_pos], line_no);
        if (c_speed >= 0) r.speed = detail::parse_double(f[c_speed], line_no);
        r.leader = c_leader >= 0 ? detail::parse_int(f[c_leader], line_no) : 0;
        if (r.leader < 0) throw DataError("line " + std::to_string(line_no) + ": negative leader id");
        r.length = c_len >= 0 ? detail::parse_double(f[c_len], line_no) : schema.default_length;
        r.lane = c_lane >= 0 ? detail::parse_int(f[c_lane], line_no) : 0;
        rows[id].push_back(r);
        ++count;
    }
    if (count == 0) throw DataError("no records");

    for (auto& [id, rs] : rows)
        std::stable_sort(rs.begin(), rs.end(), [](const auto& a, const auto& b) { return a.time < b.time; });

    double dt = 0.0;
    if (schema.frame_dt) {
        dt = *schema.frame_dt;
    } else {
        double smallest = kInf;
        for (const auto& [id, rs] : rows)
            for (std::size_t k = 1; k < rs.size(); ++k) {
                const double d = rs[k].time - rs[k - 1].time;
                if (d == 0.0) throw DataError("duplicate rows for vehicle " + std::to_string(id));
                smallest = std::min(smallest, d);
            }
        dt = std::isfinite(smallest) ? detail::tidy_dt(smallest) : 0.1;
    }
    if (!(dt > 0.0)) throw DataError("dt must be positive");

    TrajectorySet set(dt, units);
    for (const auto& [id, rs] : rows) {
        Trajectory t;
        t.vehicle_id = id;
        t.dt = dt;
        t.length = rs.front().length;
        std::vector<Frame> frames;
        for (const auto& r : rs) {
            const double units_of_dt = schema.frame_dt ? r.time : r.time / dt;
            const Frame f = static_cast<Frame>(std::llround(units_of_dt));
            if (std::abs(units_of_dt - static_cast<double>(f)) > 1e-6)
                throw DataError("non-uniform timestamps for vehicle " + std::to_string(id));
            if (!frames.empty() && f == frames.back())
                throw DataError("duplicate rows for vehicle " + std::to_string(id));
            if (!frames.empty() && f != frames.back() + 1)
                throw DataError("non-uniform timestamps for vehicle " + std::to_string(id));
            frames.push_back(f);
            t.positions.push_back(r.position);
            t.leaders.push_back(r.leader);
            t.lanes.push_back(r.lane);
        }
        t.first_frame = frames.front();
        if (c_speed >= 0) {
            for (const auto& r : rs) t.speeds.push_back(*r.speed);
        } else {
            const auto n = t.positions.size();
            t.speeds.resize(n);
            for (std::size_t k = 0; k + 1 < n; ++k) t.speeds[k] = (t.positions[k + 1] - t.positions[k]) / dt;
            t.speeds[n - 1] = n >= 2 ? t.speeds[n - 2] : 0.0;
        }
        validate(t, schema.v_max);
        set.add(std::move(t));
    }
    set.set_leader_column_missing(c_leader < 0);
    return set;
}

inline TrajectorySet load_trajectories(const std::string& text, const CsvSchema& schema = {},
                                       UnitSystem units = UnitSystem::FeetSeconds) {
    std::istringstream in(text);
    return load_trajectories(in, schema, units);
}

// Writes the canonical schema with round-trip precision.
inline void write_trajectories(std::ostream& out, const TrajectorySet& set) {
    out << "vehicle_id,time,position,speed,leader_id,length,lane\n";
    auto old = out.precision(std::numeric_limits<double>::max_digits10);
    for (const auto& [id, t] : set.trajectories()) {
        for (std::size_t k = 0; k < t.size(); ++k) {
            const double time = static_cast<double>(t.first_frame + static_cast<Frame>(k)) * t.dt;
            out << id << ',' << time << ',' << t.positions[k] << ',' << t.speeds[k] << ',' << t.leaders[k]
                << ',' << t.length << ',' << t.lanes[k] << '\n';
        }
    }
    out.precision(old);
}

// ---------------------------------------------------------------------------
// Platoon

struct PlatoonMember {
    int id{0};
    Frame first{0};      // t_i
    Frame last{0};       // T_i
    Frame model_end{0};  // T_{i-1}: last frame with a leader
    double length{0.0};
    std::vector<int> leader;         // L(i, t), 0 = none
    std::vector<int> leader_slot;    // in-platoon slot of L(i, t), -1 otherwise
    std::vector<int> follower_slot;  // G(i, t) as a slot, -1 otherwise

    [[nodiscard]] std::size_t index(Frame f) const noexcept { return static_cast<std::size_t>(f - first); }
    [[nodiscard]] bool covers(Frame f) const noexcept { return f >= first && f <= last; }
};

class Platoon {
public:
    Platoon() = default;

    [[nodiscard]] std::size_t size() const noexcept { return members_.size(); }
    [[nodiscard]] const PlatoonMember& member(std::size_t slot) const { return members_.at(slot); }
    [[nodiscard]] const std::vector<PlatoonMember>& members() const noexcept { return members_; }
    [[nodiscard]] std::vector<int> ids() const {
        std::vector<int> out;
        for (const auto& m : members_) out.push_back(m.id);
        return out;
    }
    [[nodiscard]] std::optional<std::size_t> slot_of(int id) const {
        for (std::size_t s = 0; s < members_.size(); ++s)
            if (members_[s].id == id) return s;
        return std::nullopt;
    }
    [[nodiscard]] double dt() const noexcept { return dt_; }
    [[nodiscard]] Frame first_frame() const noexcept { return first_frame_; }
    [[nodiscard]] Frame last_frame() const noexcept { return last_frame_; }

    // L(i, t) as a vehicle id; 0 outside the member's window or when absent.
    [[nodiscard]] int leader(std::size_t slot, Frame f) const {
        const auto& m = members_.at(slot);
        return m.covers(f) ? m.leader[m.index(f)] : 0;
    }
    // G(i, t) as a vehicle id; 0 when no in-platoon follower.
    [[nodiscard]] int follower(std::size_t slot, Frame f) const {
        const auto& m = members_.at(slot);
        if (!m.covers(f)) return 0;
        const int s = m.follower_slot[m.index(f)];
        return s < 0 ? 0 : members_[static_cast<std::size_t>(s)].id;
    }

    // θ_j as frames, sorted and unique.
    [[nodiscard]] const std::vector<Frame>& event_frames() const noexcept { return events_; }
    [[nodiscard]] std::vector<double> event_times() const {
        std::vector<double> out;
        for (auto f : events_) out.push_back(static_cast<double>(f) * dt_);
        return out;
    }
    // χ_j: slots ordered so in-platoon leaders come first, one per interval
    // [θ_j, θ_{j+1}).
    [[nodiscard]] const std::vector<std::vector<std::size_t>>& orders() const noexcept { return orders_; }

private:
    friend Platoon build_platoon(const TrajectorySet&, std::span<const int>);

    std::vector<PlatoonMember> members_;
    std::vector<Frame> events_;
    std::vector<std::vector<std::size_t>> orders_;
    double dt_{0.1};
    Frame first_frame_{0};
    Frame last_frame_{0};
};

inline Platoon build_platoon(const TrajectorySet& set, std::span<const int> ids) {
    if (ids.empty()) throw DataError("platoon needs at least one vehicle");
    Platoon p;
    p.dt_ = set.dt();
    std::map<int, int> slot;
    for (std::size_t s = 0; s < ids.size(); ++s) {
        if (!set.contains(ids[s])) throw DataError("vehicle " + std::to_string(ids[s]) + " not in data");
        if (!slot.emplace(ids[s], static_cast<int>(s)).second)
            throw DataError("vehicle " + std::to_string(ids[s]) + " listed twice");
    }

    auto time_str = [&](Frame f) { return std::to_string(static_cast<double>(f) * set.dt()); };

    for (int id : ids) {
        const auto& t = set.at(id);
        PlatoonMember m;
        m.id = id;
        m.first = t.first_frame;
        m.last = t.last_frame();
        m.length = t.length;
        m.leader = t.leaders;
        m.model_end = m.first;
        for (Frame f = m.last; f >= m.first; --f)
            if (t.leader_at(f) != 0) {
                m.model_end = f;
                break;
            }
        for (Frame f = m.first; f < m.model_end; ++f) {
            const int l = t.leader_at(f);
            if (l == 0)
                throw DataError("leader gap for vehicle " + std::to_string(id) + " at t=" + time_str(f) +
                                ": no leader inside the simulation window");
            const auto* lt = set.find(l);
            if (lt == nullptr || !lt->covers(f))
                throw DataError("leader gap for vehicle " + std::to_string(id) + " at t=" + time_str(f) +
                                ": leader " + std::to_string(l) + " not observed");
        }
        m.leader_slot.assign(m.leader.size(), -1);
        for (std::size_t k = 0; k < m.leader.size(); ++k) {
            auto it = slot.find(m.leader[k]);
            if (it != slot.end()) m.leader_slot[k] = it->second;
        }
        m.follower_slot.assign(m.leader.size(), -1);
        p.members_.push_back(std::move(m));
    }

    for (std::size_t j = 0; j < p.members_.size(); ++j) {
        const auto& fm = p.members_[j];
        for (std::size_t k = 0; k < fm.leader_slot.size(); ++k) {
            const int ls = fm.leader_slot[k];
            if (ls < 0) continue;
            auto& lm = p.members_[static_cast<std::size_t>(ls)];
            const Frame f = fm.first + static_cast<Frame>(k);
            if (!lm.covers(f))
                throw DataError("leader gap for vehicle " + std::to_string(fm.id) + " at t=" + time_str(f));
            auto& g = lm.follower_slot[lm.index(f)];
            if (g < 0) g = static_cast<int>(j);
        }
    }

    std::vector<Frame> ev;
    p.first_frame_ = p.members_.front().first;
    p.last_frame_ = p.members_.front().last;
    for (const auto& m : p.members_) {
        p.first_frame_ = std::min(p.first_frame_, m.first);
        p.last_frame_ = std::max(p.last_frame_, m.last);
        ev.push_back(m.first);
        ev.push_back(m.last);
        ev.push_back(m.model_end);
        for (std::size_t k = 1; k < m.leader.size(); ++k)
            if (m.leader[k] != m.leader[k - 1]) ev.push_back(m.first + static_cast<Frame>(k));
    }
    std::sort(ev.begin(), ev.end());
    ev.erase(std::unique(ev.begin(), ev.end()), ev.end());
    p.events_ = std::move(ev);

    // Kahn's algorithm per interval, ties broken by platoon order.
    const auto n = p.members_.size();
    const auto intervals = p.events_.size() > 1 ? p.events_.size() - 1 : 1;
    for (std::size_t j = 0; j < intervals; ++j) {
        const Frame f = p.events_[j];
        std::vector<int> lead(n, -1);
        std::vector<bool> active(n, false);
        for (std::size_t s = 0; s < n; ++s) {
            const auto& m = p.members_[s];
            active[s] = m.covers(f);
            if (active[s]) lead[s] = m.leader_slot[m.index(f)];
        }
        std::vector<std::size_t> order;
        std::vector<bool> placed(n, false);
        bool progress = true;
        while (progress) {
            progress = false;
            for (std::size_t s = 0; s < n; ++s) {
                if (!active[s] || placed[s]) continue;
                const int l = lead[s];
                if (l < 0 || !active[static_cast<std::size_t>(l)] || placed[static_cast<std::size_t>(l)]) {
                    order.push_back(s);
                    placed[s] = true;
                    progress = true;
                }
            }
        }
        for (std::size_t s = 0; s < n; ++s)
            if (active[s] && !placed[s])
                throw DataError("circular leadership among platoon vehicles at t=" + time_str(f));
        p.orders_.push_back(std::move(order));
    }
    return p;
}

inline Platoon build_platoon(const TrajectorySet& set, std::initializer_list<int> ids) {
    std::vector<int> v(ids);
    return build_platoon(set, std::span<const int>(v));
}

}  // namespace cfcal
