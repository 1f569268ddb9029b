#pragma once

// Emulated compute device.
//
// Kernels are host functions executed once per work group over an ND range,
// dispatched to a pool of workers. The only ordering guarantee between
// dispatches is the event dependency list handed to enqueue(). launch()
// derives that list from the read/write event stacks carried by every
// buffer, the same way the OpenCL backend this library models does it:
//
//   in     argument: wait on the buffer's write stack, attach to its read stack
//   out    argument: wait on read + write stacks, attach to its write stack
//   in_out argument: both of the above

#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

namespace blocklin {

namespace detail {
struct EventState;
struct BufferState;
class DeviceImpl;
}  // namespace detail

class OutOfDeviceMemory : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Raised for dispatches that do not match a registered kernel.
class KernelError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

enum class ArgKind : std::uint8_t { In, Out, InOut, Scalar };
enum class ElementType : std::uint8_t { F64, I32 };

const char* to_string(ArgKind kind);

/// Completion token of one dispatch (or one host transfer).
class Event {
  public:
    Event() = default;

    std::uint64_t id() const;
    bool is_complete() const;
    void wait() const;

    explicit operator bool() const {
        return state_ != nullptr;
    }

    friend bool operator==(const Event& a, const Event& b) {
        return a.state_ == b.state_;
    }

  private:
    friend class detail::DeviceImpl;
    explicit Event(std::shared_ptr<detail::EventState> state) : state_(std::move(state)) {}

    std::shared_ptr<detail::EventState> state_;
};

using EventList = std::vector<Event>;

void wait_for(const EventList& events);

/// Handle to a contiguous device allocation. Copies share the allocation.
class DeviceBuffer {
  public:
    DeviceBuffer() = default;

    std::uint64_t id() const;
    std::size_t size() const;
    ElementType type() const;
    bool valid() const {
        return state_ != nullptr;
    }

    EventList read_events() const;
    EventList write_events() const;

    // Blocking host transfers. Reads wait on the write stack, writes wait on
    // both stacks and leave a completed event on the write stack.
    std::vector<double> read_f64() const;
    std::vector<std::int32_t> read_i32() const;
    void write(std::span<const double> data);
    void write(std::span<const std::int32_t> data);

    friend bool operator==(const DeviceBuffer& a, const DeviceBuffer& b) {
        return a.state_ == b.state_;
    }

    // internal
    explicit DeviceBuffer(std::shared_ptr<detail::BufferState> state) : state_(std::move(state)) {}
    detail::BufferState& state() const {
        return *state_;
    }

  private:
    std::shared_ptr<detail::BufferState> state_;
};

/// Zero-initialized allocation. Throws OutOfDeviceMemory past the device cap.
DeviceBuffer alloc_buffer(std::size_t len, ElementType type = ElementType::F64);

struct NDRange {
    std::array<std::size_t, 3> extent {1, 1, 1};
    std::size_t dims = 1;

    NDRange() = default;
    NDRange(std::size_t x) : extent {x, 1, 1}, dims(1) {}
    NDRange(std::size_t x, std::size_t y) : extent {x, y, 1}, dims(2) {}
    NDRange(std::size_t x, std::size_t y, std::size_t z) : extent {x, y, z}, dims(3) {}

    std::size_t operator[](std::size_t d) const {
        return extent[d];
    }
    std::size_t total() const {
        return extent[0] * extent[1] * extent[2];
    }
};

using ScalarValue = std::variant<double, std::int64_t>;

struct KernelArg {
    std::variant<DeviceBuffer, ScalarValue> value;
    ArgKind kind = ArgKind::Scalar;

    const DeviceBuffer* buffer() const {
        return std::get_if<DeviceBuffer>(&value);
    }
};

struct KernelDispatch {
    std::string kernel_name;
    NDRange global;
    NDRange local;
    std::vector<KernelArg> args;
};

/// Events a dispatch over `args` must wait for.
EventList collect_events(std::span<const KernelArg> args);

/// Attach `e` to the stacks of every buffer in `args`. Completed events are
/// pruned from the stacks first.
void assign_event(const Event& e, std::span<const KernelArg> args);

/// Argument accessor handed to kernel bodies.
class KernelArgs {
  public:
    explicit KernelArgs(std::span<const KernelArg> args) : args_(args) {}

    std::span<const double> in(std::size_t i) const;
    std::span<double> out(std::size_t i) const;
    std::span<const std::int32_t> in_i32(std::size_t i) const;
    std::span<std::int32_t> out_i32(std::size_t i) const;

    double real(std::size_t i) const;
    std::int64_t integer(std::size_t i) const;
    std::size_t size(std::size_t i) const {
        return static_cast<std::size_t>(integer(i));
    }

  private:
    const detail::BufferState& state(std::size_t i) const;

    std::span<const KernelArg> args_;
};

struct WorkItem {
    std::array<std::size_t, 3> global {0, 0, 0};
    std::array<std::size_t, 3> local {0, 0, 0};
};

class WorkGroup {
  public:
    WorkGroup(const NDRange& global, const NDRange& local, std::array<std::size_t, 3> group_id);

    std::size_t group_id(std::size_t d) const {
        return group_id_[d];
    }
    std::size_t local_size(std::size_t d) const {
        return local_[d];
    }
    std::size_t global_size(std::size_t d) const {
        return global_[d];
    }
    /// Items of this group that fall inside the global range along `d`.
    std::size_t active(std::size_t d) const;
    std::size_t global_offset(std::size_t d) const {
        return group_id_[d] * local_[d];
    }

    /// One pass over the active items; consecutive passes are separated by an
    /// implicit barrier.
    template<typename F>
    void for_each_item(F&& f) const {
        const std::size_t nx = active(0), ny = active(1), nz = active(2);
        WorkItem item;
        for (std::size_t z = 0; z < nz; ++z) {
            for (std::size_t y = 0; y < ny; ++y) {
                for (std::size_t x = 0; x < nx; ++x) {
                    item.local = {x, y, z};
                    item.global = {global_offset(0) + x, global_offset(1) + y, global_offset(2) + z};
                    f(static_cast<const WorkItem&>(item));
                }
            }
        }
    }

  private:
    std::array<std::size_t, 3> global_;
    std::array<std::size_t, 3> local_;
    std::array<std::size_t, 3> group_id_;
};

using GroupBody = std::function<void(const WorkGroup&, const KernelArgs&)>;
using ItemBody = std::function<void(const WorkItem&, const KernelArgs&)>;

struct KernelDef {
    std::string name;
    std::vector<ArgKind> signature;
    GroupBody body;
};

void register_kernel(KernelDef def);
const KernelDef* find_kernel(const std::string& name);

/// Convert launch arguments. Overloads for matrix types live with them.
inline KernelArg to_kernel_arg(const DeviceBuffer& b, ArgKind kind) {
    return KernelArg {b, kind};
}
template<typename T>
    requires std::is_arithmetic_v<T>
KernelArg to_kernel_arg(T v, ArgKind kind) {
    if constexpr (std::is_floating_point_v<T>) {
        return KernelArg {ScalarValue {static_cast<double>(v)}, kind};
    } else {
        return KernelArg {ScalarValue {static_cast<std::int64_t>(v)}, kind};
    }
}

/// A named kernel with a fixed argument signature, registered on construction.
///
///     const Kernel add("add", {ArgKind::Out, ArgKind::In, ArgKind::In, ArgKind::Scalar}, body);
///     add(NDRange(m, n), NDRange(8, 8), C, A, B, rows);
class Kernel {
  public:
    Kernel(std::string name, std::vector<ArgKind> signature, GroupBody body);
    Kernel(std::string name, std::vector<ArgKind> signature, ItemBody body);

    const std::string& name() const {
        return name_;
    }
    const std::vector<ArgKind>& signature() const {
        return signature_;
    }

    template<typename... Args>
    Event operator()(const NDRange& global, const NDRange& local, const Args&... args) const {
        if (sizeof...(Args) != signature_.size()) {
            throw KernelError("kernel '" + name_ + "': expected " + std::to_string(signature_.size())
                              + " arguments, got " + std::to_string(sizeof...(Args)));
        }
        KernelDispatch d {name_, global, local, {}};
        d.args.reserve(sizeof...(Args));
        std::size_t i = 0;
        (d.args.push_back(to_kernel_arg(args, signature_[i++])), ...);
        return launch(d);
    }

    static Event launch(const KernelDispatch& d);

  private:
    std::string name_;
    std::vector<ArgKind> signature_;
};

struct KernelProfile {
    std::string kernel_name;
    std::uint64_t event_id = 0;
    std::size_t global_items = 0;
    std::chrono::nanoseconds duration {0};
};

enum class TransferDirection : std::uint8_t { ToDevice, FromDevice };

struct TransferRecord {
    TransferDirection direction;
    std::uint64_t buffer_id = 0;
    std::size_t elements = 0;
    std::size_t bytes = 0;
};

/// Instrumentation record used to check ordering guarantees.
struct TraceRecord {
    std::uint64_t event_id = 0;
    std::string kernel_name;
    std::vector<std::uint64_t> deps;
    std::vector<std::uint64_t> reads;
    std::vector<std::uint64_t> writes;
    std::uint64_t enqueue_tick = 0;
    std::uint64_t start_tick = 0;
    std::uint64_t end_tick = 0;
};

struct DeviceOptions {
    std::size_t workers = 1;
    std::size_t memory_cap_bytes = std::size_t {1} << 30;
    bool profiling = false;
    bool tracing = false;
    /// When set, ready dispatches and work groups are executed in a random
    /// order drawn from this seed.
    std::optional<std::uint64_t> shuffle_seed;

    /// Defaults overridden by BLOCKLIN_WORKERS and BLOCKLIN_PROFILE.
    static DeviceOptions from_environment();
};

/// The single device instance. All queues and allocations go through it.
class Device {
  public:
    static Device& instance();

    Device(const Device&) = delete;
    Device& operator=(const Device&) = delete;

    /// Enqueue with an explicit dependency list. Does not touch event stacks.
    Event enqueue(const KernelDispatch& d, const EventList& deps);

    /// collect_events + enqueue + assign_event as one atomic step.
    Event launch(const KernelDispatch& d);

    /// Block until every enqueued dispatch has completed.
    void finish();

    /// Drains the queue and restarts the workers with new options.
    void configure(const DeviceOptions& options);
    DeviceOptions options() const;

    std::size_t memory_in_use() const;

    std::vector<KernelProfile> profile() const;
    std::vector<TransferRecord> transfers() const;
    std::vector<TraceRecord> trace() const;
    void clear_records();

    // internal
    detail::DeviceImpl& impl() {
        return *impl_;
    }

  private:
    Device();
    ~Device();

    std::unique_ptr<detail::DeviceImpl> impl_;
};

/// Sets device options for the lifetime of the guard and restores the
/// previous ones afterwards.
class ScopedDeviceOptions {
  public:
    explicit ScopedDeviceOptions(const DeviceOptions& options);
    ~ScopedDeviceOptions();

    ScopedDeviceOptions(const ScopedDeviceOptions&) = delete;
    ScopedDeviceOptions& operator=(const ScopedDeviceOptions&) = delete;

  private:
    DeviceOptions previous_;
};

}  // namespace blocklin
